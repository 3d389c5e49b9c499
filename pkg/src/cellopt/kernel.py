"""Periodic Laplace kernel on the unit cell.

The kernel is represented as a sum of three parts: the free-space
fundamental solution summed over the 27 nearest lattice images, a
quadratic term ``|z|^2 / 6`` that accounts for the uniform background
charge, and a harmonic polynomial correction fitted so that the kernel
and its gradient are periodic across opposite faces of the cell
``[-1/2, 1/2]^3``.  The correction is expanded in real solid harmonics
up to a chosen degree and the expansion coefficients are determined by
least squares on a grid of face points.
"""

import itertools
import json

import numpy as np
from numba import njit

from .errors import FittingError, SingularEvaluationError

FOUR_PI = 4.0 * np.pi

#: Lattice offsets of the 27 nearest periodic images, m = 0 first.
IMAGES = np.array(
    sorted(itertools.product((-1, 0, 1), repeat=3),
           key=lambda m: (m != (0, 0, 0), m)),
    dtype=float,
)


# ---------------------------------------------------------------------------
# Real solid harmonics as monomial coefficient cubes
# ---------------------------------------------------------------------------

def solid_harmonic_cubes(n_max):
    """Coefficient cubes of the real solid harmonics up to degree `n_max`.

    Returns a list of ``(n_max + 1)**2`` real arrays of shape
    ``(n_max + 1,) * 3``; entry ``[a, b, c]`` multiplies the monomial
    ``x**a * y**b * z**c``.  The list is ordered by the flat index
    ``n**2 + (l + n)`` for degree ``n`` and order ``l`` in ``-n..n``.
    """
    shape = (n_max + 1,) * 3
    # complex cubes indexed by (n, m) with 0 <= m <= n
    cplx = {(0, 0): np.zeros(shape, dtype=complex)}
    cplx[(0, 0)][0, 0, 0] = 1.0
    for m in range(1, n_max + 1):
        prev = cplx[(m - 1, m - 1)]
        cur = np.zeros(shape, dtype=complex)
        cur[1:, :, :] -= prev[:-1, :, :] / (2.0 * m)
        cur[:, 1:, :] -= 1j * prev[:, :-1, :] / (2.0 * m)
        cplx[(m, m)] = cur
    for m in range(0, n_max):
        prev = cplx[(m, m)]
        cur = np.zeros(shape, dtype=complex)
        cur[:, :, 1:] = prev[:, :, :-1]
        cplx[(m + 1, m)] = cur
    for m in range(0, n_max + 1):
        for n in range(m + 2, n_max + 1):
            p1 = cplx[(n - 1, m)]
            p2 = cplx[(n - 2, m)]
            cur = np.zeros(shape, dtype=complex)
            cur[:, :, 1:] = (2 * n - 1) * p1[:, :, :-1]
            cur[2:, :, :] -= p2[:-2, :, :]
            cur[:, 2:, :] -= p2[:, :-2, :]
            cur[:, :, 2:] -= p2[:, :, :-2]
            cplx[(n, m)] = cur / ((n + m) * (n - m))
    cubes = []
    for n in range(n_max + 1):
        for ell in range(-n, n + 1):
            c = cplx[(n, abs(ell))]
            cubes.append(np.ascontiguousarray(c.imag if ell < 0 else c.real))
    return cubes


def cube_to_table(cube, tol=0.0):
    """Extract nonzero monomials of a coefficient cube.

    Returns ``(expo, coef)`` where `expo` is an ``(K, 3)`` int array of
    exponents and `coef` the matching coefficients.
    """
    idx = np.argwhere(np.abs(cube) > tol)
    if idx.size == 0:
        idx = np.zeros((1, 3), dtype=np.int64)
    coef = cube[idx[:, 0], idx[:, 1], idx[:, 2]]
    return np.ascontiguousarray(idx.astype(np.int64)), np.ascontiguousarray(coef)


def eval_table(points, expo, coef):
    """Values and gradients of a monomial table at `points` (shape (M, 3))."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n_pow = int(expo.max()) + 1
    powers = np.ones((3, pts.shape[0], n_pow + 1))
    for k in range(1, n_pow + 1):
        powers[:, :, k] = powers[:, :, k - 1] * pts.T
    a, b, c = expo[:, 0], expo[:, 1], expo[:, 2]
    mono = powers[0][:, a] * powers[1][:, b] * powers[2][:, c]
    val = mono @ coef
    grad = np.empty((pts.shape[0], 3))
    grad[:, 0] = (powers[0][:, np.maximum(a - 1, 0)] * a
                  * powers[1][:, b] * powers[2][:, c]) @ coef
    grad[:, 1] = (powers[0][:, a] * powers[1][:, np.maximum(b - 1, 0)] * b
                  * powers[2][:, c]) @ coef
    grad[:, 2] = (powers[0][:, a] * powers[1][:, b]
                  * powers[2][:, np.maximum(c - 1, 0)] * c) @ coef
    return val, grad


# ---------------------------------------------------------------------------
# Fast batch evaluation (shared with the boundary-operator assembly)
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True, inline="always")
def kernel_point(x, y, w, images, expo, coef, skip_first_image, xp, yp, zp):
    """Periodic kernel value and gradient at a single displacement.

    `xp`, `yp`, `zp` are caller-provided power workspaces of length at
    least ``max exponent + 1``.  With `skip_first_image` true the
    ``m = 0`` free-space term is omitted, leaving the smooth remainder
    that is regular at the origin.
    """
    n_img = images.shape[0]
    n_mono = expo.shape[0]
    n_pow = xp.shape[0] - 1
    v = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    start = 1 if skip_first_image else 0
    for m in range(start, n_img):
        dx = x - images[m, 0]
        dy = y - images[m, 1]
        dz = w - images[m, 2]
        r2 = dx * dx + dy * dy + dz * dz
        inv_r = 1.0 / np.sqrt(r2)
        v += inv_r
        inv_r3 = inv_r / r2
        gx -= dx * inv_r3
        gy -= dy * inv_r3
        gz -= dz * inv_r3
    v /= FOUR_PI
    gx /= FOUR_PI
    gy /= FOUR_PI
    gz /= FOUR_PI
    # quadratic background term
    v += (x * x + y * y + w * w) / 6.0
    gx += x / 3.0
    gy += y / 3.0
    gz += w / 3.0
    # harmonic correction polynomial
    xp[0] = 1.0
    yp[0] = 1.0
    zp[0] = 1.0
    for k in range(1, n_pow + 1):
        xp[k] = xp[k - 1] * x
        yp[k] = yp[k - 1] * y
        zp[k] = zp[k - 1] * w
    for k in range(n_mono):
        a = expo[k, 0]
        b = expo[k, 1]
        c = expo[k, 2]
        cf = coef[k]
        v += cf * xp[a] * yp[b] * zp[c]
        if a > 0:
            gx += cf * a * xp[a - 1] * yp[b] * zp[c]
        if b > 0:
            gy += cf * b * xp[a] * yp[b - 1] * zp[c]
        if c > 0:
            gz += cf * c * xp[a] * yp[b] * zp[c - 1]
    return v, gx, gy, gz


def max_power(expo):
    """Workspace length - 1 needed by `kernel_point` for a given table."""
    return int(expo.max()) if expo.size else 0


@njit(cache=True, fastmath=True)
def kernel_val_grad(z, images, expo, coef, skip_first_image):
    """Periodic kernel and its gradient at displacement vectors `z`.

    `z` has shape ``(M, 3)``.  With `skip_first_image` true the ``m = 0``
    free-space term is omitted, leaving the smooth remainder that is
    regular at ``z = 0``.
    """
    m_pts = z.shape[0]
    n_mono = expo.shape[0]
    n_pow = 0
    for k in range(n_mono):
        for d in range(3):
            if expo[k, d] > n_pow:
                n_pow = expo[k, d]
    val = np.empty(m_pts)
    grad = np.empty((m_pts, 3))
    xp = np.empty(n_pow + 1)
    yp = np.empty(n_pow + 1)
    zp = np.empty(n_pow + 1)
    for i in range(m_pts):
        v, gx, gy, gz = kernel_point(z[i, 0], z[i, 1], z[i, 2], images,
                                     expo, coef, skip_first_image, xp, yp, zp)
        val[i] = v
        grad[i, 0] = gx
        grad[i, 1] = gy
        grad[i, 2] = gz
    return val, grad


# ---------------------------------------------------------------------------
# Periodic kernel object
# ---------------------------------------------------------------------------

class PeriodicKernel:
    """Fitted periodic Laplace kernel on the unit cell.

    Parameters
    ----------
    degree : int
        Maximum solid-harmonic degree of the correction polynomial.
    alpha : array
        ``(degree + 1)**2`` expansion coefficients, flat index
        ``n**2 + (l + n)``.
    residual : float
        Maximum value-periodicity defect measured on a validation set of
        random cross-face point pairs.
    grad_residual : float
        Maximum gradient-periodicity defect on the same validation set.
    """

    def __init__(self, degree, alpha, residual=np.inf, grad_residual=np.inf,
                 sample_count=0):
        degree = int(degree)
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != ((degree + 1) ** 2,):
            raise FittingError(
                f"expected {(degree + 1) ** 2} coefficients for degree "
                f"{degree}, got {alpha.shape}")
        self.degree = degree
        self.alpha = alpha
        self.residual = float(residual)
        self.grad_residual = float(grad_residual)
        self.sample_count = int(sample_count)
        cube = np.zeros((degree + 1,) * 3)
        for q, c in enumerate(solid_harmonic_cubes(degree)):
            if alpha[q] != 0.0:
                cube += alpha[q] * c
        self.expo, self.coef = cube_to_table(cube)

    # -- evaluation ---------------------------------------------------------

    def values(self, z, skip_first_image=False):
        """Kernel values at displacement vectors `z` of shape (M, 3)."""
        z = self._check_points(z, skip_first_image)
        return kernel_val_grad(z, IMAGES, self.expo, self.coef,
                               skip_first_image)[0]

    def gradients(self, z, skip_first_image=False):
        """Kernel gradients at displacement vectors `z` of shape (M, 3)."""
        z = self._check_points(z, skip_first_image)
        return kernel_val_grad(z, IMAGES, self.expo, self.coef,
                               skip_first_image)[1]

    @staticmethod
    def _check_points(z, skip_first_image):
        z = np.ascontiguousarray(np.atleast_2d(z), dtype=float)
        if not skip_first_image and np.any(np.all(z == 0.0, axis=-1)):
            raise SingularEvaluationError(
                "kernel evaluated at z = 0; the free-space image is singular")
        return z

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "degree": self.degree,
            "alpha": self.alpha.tolist(),
            "residual": self.residual,
            "grad_residual": self.grad_residual,
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["degree"], data["alpha"], data["residual"],
                   data["grad_residual"], data["sample_count"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    # -- fitting ------------------------------------------------------------

    @classmethod
    def fit(cls, degree=12, n_grid=20, n_validate=10000, seed=0):
        """Fit the harmonic correction by least squares.

        Value and gradient periodicity is enforced at an `n_grid` x
        `n_grid` Chebyshev grid of points on each of the three pairs of
        opposite cell faces.  The degree-0 coefficient is pinned to zero
        to fix the additive gauge.
        """
        if degree < 2:
            raise FittingError("correction degree must be at least 2")
        cubes = solid_harmonic_cubes(degree)
        n_basis = len(cubes)
        base, shift = _face_point_pairs(_face_grid(n_grid))
        n_rows = 4 * base.shape[0]
        design = np.empty((n_rows, n_basis))
        for q, cube in enumerate(cubes):
            expo, coef = cube_to_table(cube)
            v0, g0 = eval_table(base, expo, coef)
            v1, g1 = eval_table(shift, expo, coef)
            design[:, q] = np.concatenate(
                [v1 - v0, (g1 - g0).ravel(order="F")])
        rhs = -_smooth_part_jump(base, shift)
        # gauge: drop the constant basis function
        cols = design[:, 1:]
        scale = np.linalg.norm(cols, axis=0)
        scale[scale == 0.0] = 1.0
        sol, _, rank, sv = np.linalg.lstsq(cols / scale, rhs, rcond=None)
        if rank < cols.shape[1]:
            raise FittingError(
                f"rank-deficient periodicity system: rank {rank} < "
                f"{cols.shape[1]} unknowns, singular values "
                f"[{sv[0]:.3e}, {sv[-1]:.3e}]")
        alpha = np.concatenate([[0.0], sol / scale])
        kern = cls(degree, alpha, sample_count=3 * n_grid * n_grid)
        kern.residual, kern.grad_residual = kern.periodicity_defect(
            n_validate, seed)
        return kern

    def periodicity_defect(self, n_points=10000, seed=0):
        """Max value and gradient jumps over random cross-face pairs."""
        rng = np.random.default_rng(seed)
        face = rng.uniform(-0.5, 0.5, size=(n_points, 2))
        axis = rng.integers(0, 3, size=n_points)
        base, shift = _face_point_pairs((face, axis))
        v0 = kernel_val_grad(base, IMAGES, self.expo, self.coef, False)
        v1 = kernel_val_grad(shift, IMAGES, self.expo, self.coef, False)
        return (float(np.abs(v1[0] - v0[0]).max()),
                float(np.abs(v1[1] - v0[1]).max()))


def _face_grid(n_grid):
    """Chebyshev grid on a face, replicated for the three axes."""
    t = 0.5 * np.cos(np.pi * (np.arange(n_grid) + 0.5) / n_grid)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    face = np.column_stack([uu.ravel(), vv.ravel()])
    face = np.tile(face, (3, 1))
    axis = np.repeat(np.arange(3), n_grid * n_grid)
    return face, axis


def _face_point_pairs(face_axis):
    """Expand (face coords, axis) into paired points on opposite faces."""
    face, axis = face_axis
    n = face.shape[0]
    base = np.empty((n, 3))
    for i in range(3):
        sel = axis == i
        base[sel, i] = -0.5
        base[sel, (i + 1) % 3] = face[sel, 0]
        base[sel, (i + 2) % 3] = face[sel, 1]
    shift = base.copy()
    shift[np.arange(n), axis] += 1.0
    return base, shift


def _smooth_part_jump(base, shift):
    """Jump of the image-sum plus quadratic part between paired points."""
    rows = []
    for pts in (base, shift):
        d = pts[:, None, :] - IMAGES[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        val = np.sum(1.0 / r, axis=1) / FOUR_PI
        val += np.sum(pts * pts, axis=1) / 6.0
        grad = -np.sum(d / r[:, :, None] ** 3, axis=1) / FOUR_PI
        grad += pts / 3.0
        rows.append(np.concatenate([val, grad.ravel(order="F")]))
    return rows[1] - rows[0]

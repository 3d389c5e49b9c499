"""Low-rank displacement basis from a Matern covariance on the surface.

Vertex displacements are modelled as a vector-valued Gaussian field
with componentwise Matern covariance (smoothness 9/2) over the
deduplicated surface vertices.  A pivoted Cholesky factorization
C ~ L L^T captures the covariance to a trace tolerance at low rank;
the dominant eigenfields of L L^T -- obtained from the small problem
L^T L -- form the design basis.  The scale of each field carries its
eigenvalue (||v_k||^2 = lambda_k); no additional eigenvalue weighting
is applied.
"""

import numpy as np

from .errors import ParameterError, SolverError

#: trace-residual breakdown guard for the pivoted factorization
_NEGATIVE_DIAG_TOL = -1e-10


def matern_9_2(r, ell):
    """Matern covariance with smoothness index 9/2, unit variance."""
    if ell <= 0:
        raise ParameterError("correlation length must be positive")
    q = 3.0 * np.asarray(r, dtype=float) / ell
    poly = 1.0 + q + (3.0 / 7.0) * q ** 2 + (2.0 / 21.0) * q ** 3 \
        + (1.0 / 105.0) * q ** 4
    return poly * np.exp(-q)


class CovarianceAccessor:
    """Componentwise Matern covariance over a vertex set.

    Row/column index (a, i) -> 3a + i for vertex a and component i;
    cross-component blocks vanish.
    """

    def __init__(self, points, ell):
        self.points = np.asarray(points, dtype=float)
        self.ell = float(ell)
        self.size = 3 * self.points.shape[0]

    def diagonal(self):
        return np.ones(self.size)

    def column(self, idx):
        a, i = divmod(int(idx), 3)
        r = np.linalg.norm(self.points - self.points[a], axis=1)
        col = np.zeros((self.points.shape[0], 3))
        col[:, i] = matern_9_2(r, self.ell)
        return col.ravel()


class CovarianceFactor:
    """Low-rank pivoted Cholesky factor of a covariance accessor."""

    def __init__(self, factor, pivots, trace_residual):
        self.factor = factor
        self.pivots = pivots
        self.trace_residual = float(trace_residual)

    @property
    def rank(self):
        return self.factor.shape[1]


def pivoted_cholesky(accessor, tol=1e-6, max_rank=None):
    """Greedy diagonally-pivoted low-rank Cholesky factorization.

    Stops when the trace residual drops below `tol` times the initial
    trace or the rank reaches `max_rank`.  Raises SolverError when a
    diagonal residual falls below the numerical-breakdown guard.
    """
    if tol <= 0:
        raise ParameterError("trace tolerance must be positive")
    n = accessor.size
    if max_rank is None:
        max_rank = min(n, 600)
    diag = accessor.diagonal().astype(float).copy()
    trace0 = diag.sum()
    cols = np.zeros((n, max_rank))
    pivots = []
    m = 0
    while m < max_rank and diag.sum() > tol * trace0:
        p = int(np.argmax(diag))
        if diag[p] < _NEGATIVE_DIAG_TOL:
            raise SolverError(
                f"pivoted Cholesky breakdown: diagonal residual "
                f"{diag[p]:.3e} at pivot {p}")
        col = accessor.column(p)
        if m:
            col = col - cols[:, :m] @ cols[p, :m]
        piv = np.sqrt(max(diag[p], 0.0))
        if piv == 0.0:
            break
        cols[:, m] = col / piv
        diag -= cols[:, m] ** 2
        np.clip(diag, a_min=None, a_max=None, out=diag)
        if diag.min() < _NEGATIVE_DIAG_TOL:
            raise SolverError(
                f"pivoted Cholesky breakdown: diagonal residual "
                f"{diag.min():.3e}")
        diag[diag < 0.0] = 0.0
        pivots.append(p)
        m += 1
    return CovarianceFactor(cols[:, :m], np.array(pivots, dtype=np.int64),
                            diag.sum())


def extract_fields(factor, n_fields):
    """Dominant eigenfields of L L^T via the small problem L^T L.

    Returns ``(fields, eigenvalues)`` with `fields` of shape
    (n_fields, n_vertices, 3), eigenvalues descending; each field is
    L times a unit-norm eigenvector of L^T L whose first nonzero entry
    is made positive, so ||v_k||^2 = lambda_k.
    """
    rank = factor.rank
    if n_fields > rank:
        raise ParameterError(
            f"requested {n_fields} fields from a rank-{rank} factor")
    small = factor.factor.T @ factor.factor
    eigval, eigvec = np.linalg.eigh(small)
    order = np.argsort(eigval)[::-1][:n_fields]
    eigval = eigval[order]
    eigvec = eigvec[:, order]
    for k in range(n_fields):
        nz = np.nonzero(eigvec[:, k])[0]
        if nz.size and eigvec[nz[0], k] < 0:
            eigvec[:, k] = -eigvec[:, k]
    fields = (factor.factor @ eigvec).T
    return fields.reshape(n_fields, -1, 3), eigval


def displacement_basis(points, ell, n_fields, tol=1e-6, max_rank=None):
    """Convenience pipeline: accessor -> factorization -> eigenfields."""
    accessor = CovarianceAccessor(points, ell)
    factor = pivoted_cholesky(accessor, tol=tol, max_rank=max_rank)
    fields, eigval = extract_fields(factor, n_fields)
    return fields, eigval, factor

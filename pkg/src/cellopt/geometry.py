"""Multipatch representation of the cavity boundary.

The cavity boundary sits inside the unit cell Y = [-1/2, 1/2]^3 and is
described by M quadrangular patches mapping [0,1]^2 into Y.  Meshes are
dyadic subdivisions of the patch parameter squares; the working surface
is a piecewise tensor-product Lagrange interpolant of the patch maps
through the subdivision vertices, stored in Newton form per element.
"""

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, ParameterError
from .quadrature import gauss01

CELL_HALF = 0.5
IN_CELL_MARGIN = 1e-3
DEDUP_TOL = 1e-12
DEGENERATE_TOL = 1e-14

# Faces of the reference cube [-1,1]^3, oriented so du x dv points outward.
_CUBE_FACES = (
    lambda u, v: np.stack([2 * u - 1, 2 * v - 1, np.ones_like(u)], axis=-1),
    lambda u, v: np.stack([2 * v - 1, 2 * u - 1, -np.ones_like(u)], axis=-1),
    lambda u, v: np.stack([np.ones_like(u), 2 * u - 1, 2 * v - 1], axis=-1),
    lambda u, v: np.stack([-np.ones_like(u), 2 * v - 1, 2 * u - 1], axis=-1),
    lambda u, v: np.stack([2 * v - 1, np.ones_like(u), 2 * u - 1], axis=-1),
    lambda u, v: np.stack([2 * u - 1, -np.ones_like(u), 2 * v - 1], axis=-1),
)
def _face_jacobians():
    jacs = []
    for f in _CUBE_FACES:
        p0 = f(np.float64(0.0), np.float64(0.0))
        pu = f(np.float64(1.0), np.float64(0.0)) - p0
        pv = f(np.float64(0.0), np.float64(1.0)) - p0
        jacs.append((pu, pv))
    return jacs


_CUBE_JACS = _face_jacobians()


class PatchMap:
    """Smooth injective map from [0,1]^2 onto one patch of the boundary."""

    def __init__(self, index):
        self.index = index

    def position(self, u, v):
        raise NotImplementedError

    def jacobian(self, u, v):
        """Return (du, dv) position derivatives, shape (..., 3) each."""
        raise NotImplementedError


class CubeFacePatch(PatchMap):
    """Affine face of an (optionally rotated) cube."""

    def __init__(self, index, face, center, half_width, rotation=None):
        super().__init__(index)
        self.face = face
        self.center = np.asarray(center, dtype=float)
        self.half_width = float(half_width)
        self.rotation = None if rotation is None else np.asarray(rotation, dtype=float)

    def _transform(self, q):
        q = self.half_width * q
        if self.rotation is not None:
            q = q @ self.rotation.T
        return self.center + q

    def position(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return self._transform(_CUBE_FACES[self.face](u, v))

    def jacobian(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        pu, pv = _CUBE_JACS[self.face]
        du = self.half_width * np.broadcast_to(pu, u.shape + (3,))
        dv = self.half_width * np.broadcast_to(pv, u.shape + (3,))
        if self.rotation is not None:
            du = du @ self.rotation.T
            dv = dv @ self.rotation.T
        return du, dv


class SphereFacePatch(PatchMap):
    """Radial projection of a cube face onto a sphere.

    Face coordinates are warped equiangularly (t -> tan(pi t / 4), which
    fixes the corners) before projecting; this equalizes the metric and
    keeps shared edges coincident between neighbouring faces.
    """

    def __init__(self, index, face, center, radius):
        super().__init__(index)
        self.face = face
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    @staticmethod
    def _warp(q):
        return np.tan(q * (np.pi / 4.0))

    @staticmethod
    def _dwarp(q):
        return (np.pi / 4.0) / np.cos(q * (np.pi / 4.0)) ** 2

    def position(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        q = self._warp(_CUBE_FACES[self.face](u, v))
        r = np.linalg.norm(q, axis=-1, keepdims=True)
        return self.center + self.radius * q / r

    def jacobian(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        q0 = _CUBE_FACES[self.face](u, v)
        q = self._warp(q0)
        pu, pv = _CUBE_JACS[self.face]
        r = np.linalg.norm(q, axis=-1, keepdims=True)
        qhat = q / r

        def project(dq0):
            dq = self._dwarp(q0) * np.broadcast_to(dq0, q.shape)
            return self.radius / r * (dq - qhat * np.sum(qhat * dq, axis=-1, keepdims=True))

        return project(pu), project(pv)


class PolynomialPatch(PatchMap):
    """Patch given by a tensor Lagrange interpolant on uniform nodes.

    Used when reading geometry files: the stored (p1+1) x (p2+1) point
    grid defines the patch exactly.
    """

    def __init__(self, index, points):
        super().__init__(index)
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ParameterError("patch point grid must have shape (p1+1, p2+1, 3)")
        p1 = self.points.shape[0] - 1
        p2 = self.points.shape[1] - 1
        self._nodes_u = np.linspace(0.0, 1.0, p1 + 1)
        self._nodes_v = np.linspace(0.0, 1.0, p2 + 1)
        self._newton = _newton_coefficients(self.points[None], self._nodes_u, self._nodes_v)[0]

    def position(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        val, _, _ = _newton_eval(self._newton[None], self._nodes_u, self._nodes_v,
                                 u.ravel(), v.ravel(), np.zeros(u.size, dtype=np.intp))
        return val.reshape(u.shape + (3,))

    def jacobian(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        _, du, dv = _newton_eval(self._newton[None], self._nodes_u, self._nodes_v,
                                 u.ravel(), v.ravel(), np.zeros(u.size, dtype=np.intp))
        return du.reshape(u.shape + (3,)), dv.reshape(u.shape + (3,))


def _check_in_cell(maps, margin=IN_CELL_MARGIN, samples=17):
    grid = np.linspace(0.0, 1.0, samples)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    for m in maps:
        pts = m.position(uu, vv)
        if np.max(np.abs(pts)) > CELL_HALF - margin:
            raise GeometryError(
                f"patch {m.index} leaves the unit cell margin "
                f"(max |coord| = {np.max(np.abs(pts)):.6g}, allowed {CELL_HALF - margin:.6g})")


def rotation_t():
    """The orthogonal frame used by the rotated-cube and rotated-target cases."""
    s3, s2, s6 = np.sqrt(3.0), np.sqrt(2.0), np.sqrt(6.0)
    return np.array([
        [1 / s3, 0.0, 2 / s6],
        [1 / s3, -1 / s2, -1 / s6],
        [1 / s3, 1 / s2, -1 / s6],
    ])


def generate_primitive(kind, **params):
    """Build the patch maps of a primitive cavity.

    Supported kinds: sphere, cube, rotated_cube, two_body and
    drilled_cube_stub (which only raises).  Shapes must stay inside the
    cell with the standard margin.
    """
    if kind == "sphere":
        center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), float)
        radius = float(params.get("radius", 0.3))
        if radius <= 0:
            raise ParameterError("sphere radius must be positive")
        if np.max(np.abs(center)) + radius > CELL_HALF - IN_CELL_MARGIN:
            raise GeometryError("sphere exceeds the in-cell margin")
        maps = [SphereFacePatch(i, i, center, radius) for i in range(6)]
    elif kind in ("cube", "rotated_cube"):
        center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), float)
        half = float(params.get("half_width", 0.15))
        if half <= 0:
            raise ParameterError("cube half-width must be positive")
        rot = None
        if kind == "rotated_cube":
            rot = np.asarray(params.get("rotation", rotation_t()), float)
            if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-12:
                raise ParameterError("rotation matrix must be orthogonal to 1e-12")
        corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        pts = half * corners if rot is None else half * corners @ rot.T
        if np.max(np.abs(center + pts)) > CELL_HALF - IN_CELL_MARGIN:
            raise GeometryError("cube exceeds the in-cell margin")
        maps = [CubeFacePatch(i, i, center, half, rot) for i in range(6)]
    elif kind == "two_body":
        s_center = np.asarray(params.get("sphere_center", (-0.25, -0.25, -0.25)), float)
        s_radius = float(params.get("sphere_radius", 0.15))
        c_lo = np.asarray(params.get("cube_lo", (0.175, 0.175, 0.175)), float)
        c_hi = np.asarray(params.get("cube_hi", (0.325, 0.325, 0.325)), float)
        c_center = 0.5 * (c_lo + c_hi)
        c_half = float(np.max(c_hi - c_lo) / 2.0)
        sphere = generate_primitive("sphere", center=s_center, radius=s_radius)
        cube = generate_primitive("cube", center=c_center, half_width=c_half)
        maps = sphere + [CubeFacePatch(i + 6, m.face, m.center, m.half_width) for i, m in enumerate(cube)]
    elif kind == "drilled_cube_stub":
        raise NotImplementedError("the 48-patch drilled cube layout is not implemented")
    else:
        raise ParameterError(f"unknown primitive kind {kind!r}")
    _check_in_cell(maps)
    return maps


class ElementGrid:
    """Dyadic level-j mesh of a patch list with deduplicated vertices."""

    def __init__(self, maps, level, points=None, topology=None):
        if level < 0:
            raise ParameterError("refinement level must be nonnegative")
        self.maps = maps
        self.level = int(level)
        self.n_side = 2 ** self.level + 1
        self.n_patches = len(maps)
        xi = np.linspace(0.0, 1.0, self.n_side)
        uu, vv = np.meshgrid(xi, xi, indexing="ij")
        if points is None:
            points = np.stack([m.position(uu, vv) for m in maps], axis=0)
        self.points = points
        if topology is None:
            self.gid = self._deduplicate()
        else:
            self.gid = topology
        self.n_unique = int(self.gid.max()) + 1
        self.unique_points = np.zeros((self.n_unique, 3))
        self.unique_points[self.gid.reshape(-1)] = self.points.reshape(-1, 3)
        self._build_elements()

    def _deduplicate(self):
        flat = self.points.reshape(-1, 3)
        tree = cKDTree(flat)
        parent = np.arange(len(flat))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, j in tree.query_pairs(DEDUP_TOL):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        roots = np.array([find(i) for i in range(len(flat))])
        _, gid = np.unique(roots, return_inverse=True)
        return gid.reshape(self.points.shape[:3])

    def _build_elements(self):
        ne = 2 ** self.level
        patches, ku, kv = np.meshgrid(np.arange(self.n_patches), np.arange(ne), np.arange(ne), indexing="ij")
        self.elem_patch = patches.reshape(-1)
        self.elem_ku = ku.reshape(-1)
        self.elem_kv = kv.reshape(-1)
        self.n_elements = self.elem_patch.size
        g = self.gid
        self.elem_corners = np.stack([
            g[self.elem_patch, self.elem_ku, self.elem_kv],
            g[self.elem_patch, self.elem_ku + 1, self.elem_kv],
            g[self.elem_patch, self.elem_ku + 1, self.elem_kv + 1],
            g[self.elem_patch, self.elem_ku, self.elem_kv + 1],
        ], axis=1)

    def with_points(self, unique_points):
        """Same topology with moved vertices (scattered back to all copies)."""
        unique_points = np.asarray(unique_points, float)
        if unique_points.shape != (self.n_unique, 3):
            raise ParameterError("unique point array has wrong shape")
        pts = unique_points[self.gid]
        return ElementGrid(self.maps, self.level, points=pts, topology=self.gid)

    def patch_edge_ids(self, patch, edge):
        """Vertex ids along one of the four parameter edges of a patch."""
        g = self.gid[patch]
        if edge == 0:
            return g[:, 0]
        if edge == 1:
            return g[-1, :]
        if edge == 2:
            return g[:, -1]
        return g[0, :]


def refine_to_level(maps, level):
    """Dyadic level-j element grid over the patch list (4^j M elements)."""
    return ElementGrid(maps, level)


def _newton_coefficients(values, nodes_u, nodes_v):
    """Divided differences along both tensor directions.

    values: (..., p1+1, p2+1, C) stencil data at (nodes_u x nodes_v).
    """
    c = np.array(values, dtype=float, copy=True)
    p1 = len(nodes_u) - 1
    p2 = len(nodes_v) - 1
    for k in range(1, p1 + 1):
        for i in range(p1, k - 1, -1):
            c[..., i, :, :] = (c[..., i, :, :] - c[..., i - 1, :, :]) / (nodes_u[i] - nodes_u[i - k])
    for k in range(1, p2 + 1):
        for i in range(p2, k - 1, -1):
            c[..., :, i, :] = (c[..., :, i, :] - c[..., :, i - 1, :]) / (nodes_v[i] - nodes_v[i - k])
    return c


def _newton_eval(newton, nodes_u, nodes_v, u, v, elem_idx):
    """Horner evaluation with first derivatives.

    newton: (E, p1+1, p2+1, C); u, v, elem_idx: flat arrays of equal length.
    Returns value, d/du, d/dv with shape (len(u), C).
    """
    c = newton[elem_idx]  # (P, p1+1, p2+1, C)
    p1 = c.shape[1] - 1
    p2 = c.shape[2] - 1
    vv = v[:, None, None]
    # inner Horner along v for every u-node row, with derivative
    val = np.array(c[:, :, p2, :])
    dval = np.zeros_like(val)
    for i in range(p2 - 1, -1, -1):
        t = vv - nodes_v[i]
        dval = val + t * dval
        val = c[:, :, i, :] + t * val
    # outer Horner along u
    uu = u[:, None]
    b = val  # (P, p1+1, C)
    db = dval
    out = np.array(b[:, p1, :])
    out_du = np.zeros_like(out)
    out_dv = np.array(db[:, p1, :])
    for i in range(p1 - 1, -1, -1):
        t = uu - nodes_u[i]
        out_du = out + t * out_du
        out = b[:, i, :] + t * out
        out_dv = db[:, i, :] + t * out_dv
    return out, out_du, out_dv


def _lagrange_matrices(nodes, pts):
    """Cardinal Lagrange values and derivatives at pts, shape (len(pts), len(nodes))."""
    nodes = np.asarray(nodes, float)
    pts = np.asarray(pts, float)
    n = len(nodes)
    L = np.empty((len(pts), n))
    dL = np.empty((len(pts), n))
    for i in range(n):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        diffs = pts[:, None] - others[None, :]
        L[:, i] = np.prod(diffs, axis=1) / denom
        s = np.zeros(len(pts))
        for k in range(n - 1):
            s += np.prod(np.delete(diffs, k, axis=1), axis=1)
        dL[:, i] = s / denom
    return L, dL


class SurfaceSample:
    """Pointwise geometric data on the surface."""

    __slots__ = ("position", "tangent_u", "tangent_v", "normal", "measure")

    def __init__(self, position, tangent_u, tangent_v, normal, measure):
        self.position = position
        self.tangent_u = tangent_u
        self.tangent_v = tangent_v
        self.normal = normal
        self.measure = measure


class PolynomialSurface:
    """Piecewise tensor-Lagrange surface on a dyadic element grid.

    Each element carries the Newton form of the interpolant of the patch
    map through its (p1+1) x (p2+1) stencil; evaluation is by the Horner
    scheme.  Immutable after construction.
    """

    def __init__(self, grid, degree=(4, 4), orientation=1.0, check=True):
        p1, p2 = int(degree[0]), int(degree[1])
        ne = 2 ** grid.level
        if p1 < 1 or p2 < 1:
            raise ParameterError("interpolation degree must be at least 1")
        if p1 > ne or p2 > ne:
            raise ParameterError(f"degree {degree} exceeds 2^j = {ne}")
        self.grid = grid
        self.degree = (p1, p2)
        self.orientation = float(orientation)
        self.n_elements = grid.n_elements

        # per-direction stencil offset a = k - m in {0, ..., p-1}
        self.off_u = np.maximum(0, grid.elem_ku - (ne - p1))
        self.off_v = np.maximum(0, grid.elem_kv - (ne - p2))
        # local node coordinates, in units of the element width
        self.nodes_u = (np.arange(p1 + 1)[None, :] - self.off_u[:, None]).astype(float)
        self.nodes_v = (np.arange(p2 + 1)[None, :] - self.off_v[:, None]).astype(float)

        # gather stencil values from the patch point grids
        iu = (grid.elem_ku - self.off_u)[:, None] + np.arange(p1 + 1)[None, :]
        iv = (grid.elem_kv - self.off_v)[:, None] + np.arange(p2 + 1)[None, :]
        self.stencil = grid.points[grid.elem_patch[:, None, None],
                                   iu[:, :, None], iv[:, None, :]]  # (E, p1+1, p2+1, 3)
        self.stencil_gid = grid.gid[grid.elem_patch[:, None, None],
                                    iu[:, :, None], iv[:, None, :]]

        # Newton coefficients per offset pattern (nodes differ only via a)
        self.newton = np.empty_like(self.stencil)
        self._patterns = {}
        for au in np.unique(self.off_u):
            for av in np.unique(self.off_v):
                mask = (self.off_u == au) & (self.off_v == av)
                if not np.any(mask):
                    continue
                nu = np.arange(p1 + 1, dtype=float) - au
                nv = np.arange(p2 + 1, dtype=float) - av
                self.newton[mask] = _newton_coefficients(self.stencil[mask], nu, nv)
                self._patterns[(int(au), int(av))] = np.nonzero(mask)[0]
        self._grid_cache = {}
        if check:
            self._validate()

    # -- evaluation ---------------------------------------------------

    def eval_at(self, elem_idx, u, v):
        """Positions and tangents at per-element local coordinates."""
        elem_idx = np.asarray(elem_idx, dtype=np.intp)
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        pos = np.empty((len(u), 3))
        du = np.empty((len(u), 3))
        dv = np.empty((len(u), 3))
        p1, p2 = self.degree
        for (au, av), els in self._patterns.items():
            sel = np.isin(elem_idx, els)
            if not np.any(sel):
                continue
            nu = np.arange(p1 + 1, dtype=float) - au
            nv = np.arange(p2 + 1, dtype=float) - av
            val, d1, d2 = _newton_eval(self.newton, nu, nv, u[sel], v[sel], elem_idx[sel])
            pos[sel], du[sel], dv[sel] = val, d1, d2
        return pos, du, dv

    def eval_grid(self, gu, gv, values=None):
        """Tensor-grid evaluation on every element at local points gu x gv.

        Returns (pos, du, dv) arrays of shape (E, len(gu), len(gv), 3);
        with `values` given ((E, p1+1, p2+1, C) stencil data) the same
        interpolation scheme is applied to those data instead.
        """
        key = (tuple(np.round(gu, 15)), tuple(np.round(gv, 15)), id(values) if values is not None else None)
        if values is None and key in self._grid_cache:
            return self._grid_cache[key]
        data = self.stencil if values is None else values
        C = data.shape[-1]
        E = self.n_elements
        pos = np.empty((E, len(gu), len(gv), C))
        du = np.empty_like(pos)
        dv = np.empty_like(pos)
        p1, p2 = self.degree
        for (au, av), els in self._patterns.items():
            nu = np.arange(p1 + 1, dtype=float) - au
            nv = np.arange(p2 + 1, dtype=float) - av
            Lu, dLu = _lagrange_matrices(nu, gu)
            Lv, dLv = _lagrange_matrices(nv, gv)
            block = data[els]
            pos[els] = np.einsum("qi,rj,eijc->eqrc", Lu, Lv, block, optimize=True)
            du[els] = np.einsum("qi,rj,eijc->eqrc", dLu, Lv, block, optimize=True)
            dv[els] = np.einsum("qi,rj,eijc->eqrc", Lu, dLv, block, optimize=True)
        out = (pos, du, dv)
        if values is None:
            self._grid_cache[key] = out
        return out

    def sample(self, element, u, v):
        """Geometric sample at one parameter point of one element."""
        pos, du, dv = self.eval_at(np.array([element]), np.array([float(u)]), np.array([float(v)]))
        cross = np.cross(du[0], dv[0])
        g = np.linalg.norm(cross)
        if g < DEGENERATE_TOL:
            raise GeometryError(f"degenerate element {element} at ({u}, {v})")
        return SurfaceSample(pos[0], du[0], dv[0], self.orientation * cross / g, g)

    def quad_geometry(self, order):
        """Gauss-point geometry per element: x, unnormalized normal, weights."""
        x, w = gauss01(order)
        pos, du, dv = self.eval_grid(x, x)
        cross = self.orientation * np.cross(du, dv)
        g = np.linalg.norm(cross, axis=-1)
        ww = np.outer(w, w)[None, :, :] * g
        Q = order * order
        return (pos.reshape(self.n_elements, Q, 3),
                (cross / g[..., None]).reshape(self.n_elements, Q, 3),
                ww.reshape(self.n_elements, Q),
                g.reshape(self.n_elements, Q))

    # -- derived quantities -------------------------------------------

    def element_centroids_diams(self):
        c = 0.25 * self.grid.unique_points[self.grid.elem_corners].sum(axis=1)
        corners = self.grid.unique_points[self.grid.elem_corners]
        diam = np.max(np.linalg.norm(corners[:, :, None, :] - corners[:, None, :, :], axis=-1), axis=(1, 2))
        return c, diam

    def cavity_volume(self):
        """Volume enclosed by the surface via the divergence theorem."""
        order = max(self.degree) + 2
        x, n, w, _ = self.quad_geometry(order)
        vol = np.sum(w * np.einsum("eqc,eqc->eq", x, n)) / 3.0
        if vol <= 0:
            raise GeometryError("non-positive enclosed volume; surface orientation is wrong")
        return vol

    def area(self):
        order = max(self.degree) + 2
        _, _, w, _ = self.quad_geometry(order)
        return float(np.sum(w))

    def _validate(self):
        # interpolant must stay inside the cell and be non-degenerate
        if np.max(np.abs(self.grid.points)) > CELL_HALF - IN_CELL_MARGIN:
            raise GeometryError("surface vertices leave the in-cell margin")
        probe = np.linspace(0.05, 0.95, 4)
        pos, du, dv = self.eval_grid(probe, probe)
        if np.max(np.abs(pos)) > CELL_HALF - IN_CELL_MARGIN:
            raise GeometryError("surface leaves the in-cell margin")
        g = np.linalg.norm(np.cross(du, dv), axis=-1)
        if np.min(g) < DEGENERATE_TOL:
            raise GeometryError("degenerate element (vanishing tangent cross product)")


def reinterpolate(grid, degree=(4, 4)):
    """Piecewise tensor-Lagrange surface of the given degree over the grid."""
    return PolynomialSurface(grid, degree)


def apply_displacement(surface, fields, y):
    """New surface with vertices moved by sum_k y_k V_k.

    fields: (p, n_unique, 3) displacement values at the deduplicated grid
    vertices; y: coefficient vector of length p.  Movement is applied on
    the deduplicated vertex set and scattered back, so shared patch edges
    cannot tear.
    """
    fields = np.asarray(fields, float)
    y = np.asarray(y, float)
    if fields.shape[0] != y.shape[0]:
        raise ParameterError("field count and coefficient count differ")
    if fields.shape[1] != surface.grid.n_unique:
        raise ParameterError("fields were built for a different vertex set")
    moved = surface.grid.unique_points + np.tensordot(y, fields, axes=(0, 0))
    from .errors import StepRejectedError
    try:
        new_grid = surface.grid.with_points(moved)
        return PolynomialSurface(new_grid, surface.degree, surface.orientation)
    except GeometryError as exc:
        raise StepRejectedError(str(exc)) from exc

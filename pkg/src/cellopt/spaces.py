"""Tensor-product B-spline function spaces on multipatch surfaces.

Each patch carries a tensor-product basis of B-splines of degree `d`
on the dyadic level-`j` element grid, built from open uniform knot
vectors on [0, 1].  The space is either patchwise discontinuous
(Neumann data) or glued to a globally continuous space (Dirichlet data)
by identifying boundary basis functions across coinciding patch edges.

Every basis function restricted to an element is a polynomial in the
local coordinate; the per-element monomial coefficient tables make the
basis cheap to evaluate at arbitrary quadrature points.
"""

import numpy as np
from scipy.interpolate import BSpline

from .errors import ParameterError, TopologyError


def bspline_local_coeffs(level, degree):
    """Per-element monomial coefficients of the 1D B-spline basis.

    Open uniform knots on [0, 1] with ``2**level`` elements.  Returns an
    array of shape ``(2**level, degree + 1, degree + 1)``: entry
    ``[k, i, :]`` holds the ascending monomial coefficients, in the local
    element coordinate, of global basis function ``k + i`` restricted to
    element ``k``.
    """
    n_el = 2 ** level
    if degree < 0:
        raise ParameterError("spline degree must be nonnegative")
    if degree > n_el:
        raise ParameterError(
            f"spline degree {degree} exceeds element count {n_el}")
    n_fun = n_el + degree
    knots = np.concatenate([np.zeros(degree),
                            np.linspace(0.0, 1.0, n_el + 1),
                            np.ones(degree)])
    s = np.linspace(0.0, 1.0, degree + 1)
    vander = np.vander(s, degree + 1, increasing=True)
    coeffs = np.zeros((n_el, degree + 1, degree + 1))
    for k in range(n_el):
        x0, x1 = knots[degree + k], knots[degree + k + 1]
        xs = np.clip(x0 + s * (x1 - x0), 0.0, 1.0 - 1e-13)
        for i in range(degree + 1):
            c = np.zeros(n_fun)
            c[k + i] = 1.0
            vals = BSpline(knots, c, degree)(xs)
            coeffs[k, i] = np.linalg.solve(vander, vals)
    return coeffs


def eval_local_basis(coeffs, pts, deriv=False):
    """Evaluate the local basis polynomials at points in [0, 1].

    Returns an array of shape ``(n_el, degree + 1, len(pts))``.
    """
    pts = np.asarray(pts, dtype=float)
    if deriv:
        d = coeffs.shape[2] - 1
        coeffs = coeffs[:, :, 1:] * np.arange(1, d + 1)
    powers = np.vander(pts, coeffs.shape[2], increasing=True)
    return coeffs @ powers.T


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i, j):
        self.parent[self.find(i)] = self.find(j)


class TraceSpace:
    """B-spline trace space on an element grid.

    Parameters
    ----------
    grid : ElementGrid
        Dyadic multipatch element grid.
    degree : int
        Spline degree in both parameter directions.
    continuous : bool
        Glue boundary basis functions across coinciding patch edges to
        a globally continuous space.
    """

    # edge label -> (dof selector, orientation) used while gluing;
    # labels match ElementGrid.patch_edge_ids: 0: v=0, 1: u=1, 2: v=1, 3: u=0
    def __init__(self, grid, degree=2, continuous=False):
        if continuous and degree == 0:
            raise ParameterError(
                "piecewise-constant splines cannot form a continuous space")
        self.grid = grid
        self.degree = int(degree)
        self.continuous = bool(continuous)
        self.local_coeffs = bspline_local_coeffs(grid.level, degree)
        n_el = 2 ** grid.level
        n_fun = n_el + degree
        self.n_fun_1d = n_fun

        dof_map = np.arange(grid.n_patches * n_fun * n_fun).reshape(
            grid.n_patches, n_fun, n_fun)
        if continuous:
            dof_map = self._glue(dof_map)
        self.dof_map = dof_map
        self.n_dofs = int(dof_map.max()) + 1

        d1 = degree + 1
        i_loc = np.arange(d1)
        au = grid.elem_ku[:, None, None] + i_loc[:, None]
        av = grid.elem_kv[:, None, None] + i_loc[None, :]
        self.elem_dofs = np.ascontiguousarray(
            dof_map[grid.elem_patch[:, None, None], au, av]
            .reshape(grid.n_elements, d1 * d1).astype(np.int64))

    def _glue(self, dof_map):
        grid = self.grid
        n_fun = dof_map.shape[1]
        uf = _UnionFind(dof_map.size)
        edges = {}
        for p in range(grid.n_patches):
            for e in range(4):
                ids = grid.patch_edge_ids(p, e)
                if e == 0:
                    dofs = dof_map[p, :, 0]
                elif e == 1:
                    dofs = dof_map[p, -1, :]
                elif e == 2:
                    dofs = dof_map[p, :, -1]
                else:
                    dofs = dof_map[p, 0, :]
                key = (min(ids[0], ids[-1]), max(ids[0], ids[-1]))
                edges.setdefault(key, []).append((tuple(ids), dofs))
        for key, members in edges.items():
            if len(members) == 1:
                continue
            ref_ids, ref_dofs = members[0]
            for ids, dofs in members[1:]:
                if ids == ref_ids:
                    pass
                elif ids == ref_ids[::-1]:
                    dofs = dofs[::-1]
                else:
                    raise TopologyError(
                        "patch edges share endpoints but their vertex "
                        "sequences do not coincide")
                for a, b in zip(ref_dofs, dofs):
                    uf.union(int(a), int(b))
        roots = np.array([uf.find(i) for i in range(dof_map.size)])
        _, compact = np.unique(roots, return_inverse=True)
        return compact.reshape(dof_map.shape)

    # -- evaluation ---------------------------------------------------------

    def basis_at(self, pts, deriv=False):
        """Local basis values (or derivatives) at 1D points in [0, 1].

        Shape ``(n_el_1d, degree + 1, len(pts))``; row `k` serves every
        element whose 1D knot index is `k`.
        """
        return eval_local_basis(self.local_coeffs, pts, deriv)

    def eval(self, w, gu, gv, deriv=None):
        """Evaluate the spline with coefficients `w` on a tensor grid.

        Returns an ``(n_elements, len(gu), len(gv))`` array; `deriv`
        may be "u" or "v" for a local-coordinate partial derivative.
        """
        w = np.asarray(w, dtype=float)
        d1 = self.degree + 1
        wloc = w[self.elem_dofs].reshape(-1, d1, d1)
        bu = self.basis_at(gu, deriv == "u")[self.grid.elem_ku]
        bv = self.basis_at(gv, deriv == "v")[self.grid.elem_kv]
        return np.einsum("eiq,ejr,eij->eqr", bu, bv, wloc, optimize=True)

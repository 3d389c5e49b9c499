"""Galerkin assembly of the boundary operators on the cavity surface.

The single- and double-layer operators of the periodic Laplace kernel
are assembled against B-spline trace spaces.  Element pairs are
classified by shared vertices: coincident, edge-adjacent and
vertex-adjacent pairs are integrated with regularizing coordinate
transforms applied to the singular free-space image of the kernel
(the smooth periodic remainder is handled with plain tensor Gauss),
while separated pairs use tensor Gauss rules whose order decays with
the distance-to-size ratio.
"""

import numpy as np
from numba import njit

from .errors import AssemblyError, ParameterError, TopologyError
from .kernel import IMAGES, kernel_point
from .quadrature import (coincident_rule, edge_rule, gauss01, vertex_rule)

FOUR_PI = 4.0 * np.pi

#: forward corner pairs of the four element edges, edge order v=0,u=1,v=1,u=0
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
#: parameter transform codes putting an element edge into the standard
#: position (the s2 = 0 line traversed forward by s1): code = 4*swap +
#: 2*flip_u + flip_v, indexed [edge][reversed]
_EDGE_CODES = ((0, 2), (6, 7), (1, 3), (4, 5))
#: transform codes moving the standard corner (0,0) onto element corner c
_VERTEX_CODES = (0, 2, 3, 1)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True, inline="always")
def _map_code(code, a, b):
    if code >= 4:
        a, b = b, a
        code -= 4
    if code >= 2:
        a = 1.0 - a
        code -= 2
    if code == 1:
        b = 1.0 - b
    return a, b


@njit(cache=True, fastmath=True, inline="always")
def _newton_point(newton, au, av, u, v, cj, dj):
    """Tensor Newton-form evaluation with first derivatives.

    `newton` is the (p1+1, p2+1, 3) coefficient block of one element,
    nodes are (i - au) and (j - av) in element-width units; `cj`, `dj`
    are (p2+1, 3) workspaces.  Returns position and the two tangents
    laid out in a 9-vector workspace-free manner via tuple of floats.
    """
    p1 = newton.shape[0] - 1
    p2 = newton.shape[1] - 1
    # inner Newton sweep along u for every j
    for j in range(p2 + 1):
        for c in range(3):
            p = newton[p1, j, c]
            dp = 0.0
            for k in range(p1 - 1, -1, -1):
                du = u - (k - au)
                dp = p + du * dp
                p = newton[k, j, c] + du * p
            cj[j, c] = p
            dj[j, c] = dp
    # outer sweep along v
    px = cj[p2, 0]
    py = cj[p2, 1]
    pz = cj[p2, 2]
    qx = dj[p2, 0]
    qy = dj[p2, 1]
    qz = dj[p2, 2]
    dvx = 0.0
    dvy = 0.0
    dvz = 0.0
    for k in range(p2 - 1, -1, -1):
        dv = v - (k - av)
        dvx = px + dv * dvx
        dvy = py + dv * dvy
        dvz = pz + dv * dvz
        px = cj[k, 0] + dv * px
        py = cj[k, 1] + dv * py
        pz = cj[k, 2] + dv * pz
        qx = dj[k, 0] + dv * qx
        qy = dj[k, 1] + dv * qy
        qz = dj[k, 2] + dv * qz
    return px, py, pz, qx, qy, qz, dvx, dvy, dvz


@njit(cache=True, fastmath=True, inline="always")
def _basis_1d(coeffs, x, out):
    """Values of the local 1D basis polynomials at x (ascending coeffs)."""
    d1 = coeffs.shape[0]
    nc = coeffs.shape[1]
    for i in range(d1):
        p = coeffs[i, nc - 1]
        for k in range(nc - 2, -1, -1):
            p = coeffs[i, k] + x * p
        out[i] = p


@njit(cache=True, fastmath=True)
def _far_assemble(pairs, x, nrm, w, bas, dofs_d, dofs_n,
                  images, expo, coef, skip_first, mat_s, mat_k, mat_snn,
                  want_snn):
    """Tensor-Gauss contribution of separated (or smooth-part) pairs.

    Both orderings of every pair (e, f) with e != f are accumulated;
    e == f rows contribute once (used for the smooth kernel remainder
    on coincident elements).
    """
    n_pairs = pairs.shape[0]
    n_q = x.shape[1]
    nb = bas.shape[1]
    n_pow = 0
    for k in range(expo.shape[0]):
        for d in range(3):
            if expo[k, d] > n_pow:
                n_pow = expo[k, d]
    xp = np.empty(n_pow + 1)
    yp = np.empty(n_pow + 1)
    zp = np.empty(n_pow + 1)
    for p in range(n_pairs):
        e = pairs[p, 0]
        f = pairs[p, 1]
        same = e == f
        for q in range(n_q):
            wq = w[e, q]
            for r in range(n_q):
                zx = x[e, q, 0] - x[f, r, 0]
                zy = x[e, q, 1] - x[f, r, 1]
                zz = x[e, q, 2] - x[f, r, 2]
                val, gx, gy, gz = kernel_point(
                    zx, zy, zz, images, expo, coef, skip_first, xp, yp, zp)
                ww = wq * w[f, r]
                sval = val * ww
                # double layer: -<grad k(x_e - y_f), n_f> tested on e
                kef = -(gx * nrm[f, r, 0] + gy * nrm[f, r, 1]
                        + gz * nrm[f, r, 2]) * ww
                # reversed pair: -<grad k(y_f - x_e), n_e> = +<grad, n_e>
                kfe = (gx * nrm[e, q, 0] + gy * nrm[e, q, 1]
                       + gz * nrm[e, q, 2]) * ww
                for i in range(nb):
                    be = bas[e, i, q]
                    die = dofs_d[e, i]
                    nie = dofs_n[e, i]
                    for j in range(nb):
                        t = be * bas[f, j, r]
                        mat_s[die, dofs_n[f, j]] += sval * t
                        mat_k[die, dofs_d[f, j]] += kef * t
                        if want_snn:
                            mat_snn[nie, dofs_n[f, j]] += sval * t
                        if not same:
                            mat_s[dofs_d[f, j], nie] += sval * t
                            mat_k[dofs_d[f, j], die] += kfe * t
                            if want_snn:
                                mat_snn[dofs_n[f, j], nie] += sval * t


@njit(cache=True, fastmath=True)
def _singular_assemble(pairs, codes, rule, newton, off_u, off_v, orient,
                       coeffs_1d, elem_ku, elem_kv, dofs_d, dofs_n,
                       mat_s, mat_k, mat_snn, want_snn):
    """Free-space-image contribution of coincident/adjacent pairs.

    `rule` is a regularizing rule in standard configuration; `codes`
    holds the per-pair parameter transforms that realize it.  Both
    orderings of distinct pairs are accumulated.
    """
    n_pairs = pairs.shape[0]
    n_rows = rule.shape[0]
    p2 = newton.shape[2] - 1
    d1 = coeffs_1d.shape[1]
    nb = d1 * d1
    cj = np.empty((p2 + 1, 3))
    dj = np.empty((p2 + 1, 3))
    bu_e = np.empty(d1)
    bv_e = np.empty(d1)
    bu_f = np.empty(d1)
    bv_f = np.empty(d1)
    be = np.empty(nb)
    bf = np.empty(nb)
    for p in range(n_pairs):
        e = pairs[p, 0]
        f = pairs[p, 1]
        ce = codes[p, 0]
        cf = codes[p, 1]
        same = e == f
        for row in range(n_rows):
            ue, ve = _map_code(ce, rule[row, 0], rule[row, 1])
            uf, vf = _map_code(cf, rule[row, 2], rule[row, 3])
            wq = rule[row, 4]
            xe0, xe1, xe2, au0, au1, au2, av0, av1, av2 = _newton_point(
                newton[e], off_u[e], off_v[e], ue, ve, cj, dj)
            cex = (au1 * av2 - au2 * av1) * orient
            cey = (au2 * av0 - au0 * av2) * orient
            cez = (au0 * av1 - au1 * av0) * orient
            ge = np.sqrt(cex * cex + cey * cey + cez * cez)
            xf0, xf1, xf2, bu0, bu1, bu2, bv0, bv1, bv2 = _newton_point(
                newton[f], off_u[f], off_v[f], uf, vf, cj, dj)
            cfx = (bu1 * bv2 - bu2 * bv1) * orient
            cfy = (bu2 * bv0 - bu0 * bv2) * orient
            cfz = (bu0 * bv1 - bu1 * bv0) * orient
            gf = np.sqrt(cfx * cfx + cfy * cfy + cfz * cfz)
            zx = xe0 - xf0
            zy = xe1 - xf1
            zz = xe2 - xf2
            r2 = zx * zx + zy * zy + zz * zz
            if same and r2 == 0.0:
                continue
            inv_r = 1.0 / np.sqrt(r2)
            val = inv_r / FOUR_PI
            inv_r3 = inv_r / (r2 * FOUR_PI)
            # single layer with both measures; double layer absorbs the
            # unnormalized normal of the inner element
            sval = val * ge * gf * wq
            kef = (zx * cfx + zy * cfy + zz * cfz) * inv_r3 * ge * wq
            kfe = -(zx * cex + zy * cey + zz * cez) * inv_r3 * gf * wq
            _basis_1d(coeffs_1d[elem_ku[e]], ue, bu_e)
            _basis_1d(coeffs_1d[elem_kv[e]], ve, bv_e)
            _basis_1d(coeffs_1d[elem_ku[f]], uf, bu_f)
            _basis_1d(coeffs_1d[elem_kv[f]], vf, bv_f)
            for i in range(d1):
                for j in range(d1):
                    be[i * d1 + j] = bu_e[i] * bv_e[j]
                    bf[i * d1 + j] = bu_f[i] * bv_f[j]
            for i in range(nb):
                bei = be[i]
                die = dofs_d[e, i]
                nie = dofs_n[e, i]
                for j in range(nb):
                    t = bei * bf[j]
                    mat_s[die, dofs_n[f, j]] += sval * t
                    mat_k[die, dofs_d[f, j]] += kef * t
                    if want_snn:
                        mat_snn[nie, dofs_n[f, j]] += sval * t
                    if not same:
                        mat_s[dofs_d[f, j], nie] += sval * t
                        mat_k[dofs_d[f, j], die] += kfe * t
                        if want_snn:
                            mat_snn[dofs_n[f, j], nie] += sval * t


# ---------------------------------------------------------------------------
# pair classification
# ---------------------------------------------------------------------------

def classify_pairs(grid):
    """Split unordered element pairs by adjacency.

    Returns ``(edge_pairs, edge_codes, vertex_pairs, vertex_codes,
    far_pairs)``; adjacency means shared deduplicated corner vertices
    (2 for an edge, 1 for a vertex).  The code arrays hold the
    parameter transforms onto the standard singular configurations.
    """
    corners = grid.elem_corners
    by_gid = {}
    for e in range(grid.n_elements):
        for c in range(4):
            by_gid.setdefault(int(corners[e, c]), []).append(e)
    shared = {}
    for elems in by_gid.values():
        for a_i in range(len(elems)):
            for b_i in range(a_i + 1, len(elems)):
                e, f = elems[a_i], elems[b_i]
                if e == f:
                    continue
                key = (min(e, f), max(e, f))
                shared[key] = shared.get(key, 0) + 1
    edge_pairs, edge_codes = [], []
    vertex_pairs, vertex_codes = [], []
    for (e, f), count in sorted(shared.items()):
        ce = set(int(g) for g in corners[e])
        cf = set(int(g) for g in corners[f])
        common = sorted(ce & cf)
        if count == 2 and len(common) == 2:
            edge_pairs.append((e, f))
            edge_codes.append((_edge_code(corners[e], common),
                               _edge_code(corners[f], common)))
        elif count == 1 and len(common) == 1:
            vertex_pairs.append((e, f))
            vertex_codes.append((_vertex_code(corners[e], common[0]),
                                 _vertex_code(corners[f], common[0])))
        else:
            raise TopologyError(
                f"elements {e}, {f} share {len(common)} vertices; the "
                "mesh is not a conforming quadrilateral mesh")
    adjacent = set(shared)
    far = [(e, f) for e in range(grid.n_elements)
           for f in range(e + 1, grid.n_elements)
           if (e, f) not in adjacent]
    to_arr = lambda lst, m: (np.array(lst, dtype=np.int64).reshape(-1, m))
    return (to_arr(edge_pairs, 2), to_arr(edge_codes, 2),
            to_arr(vertex_pairs, 2), to_arr(vertex_codes, 2),
            to_arr(far, 2))


def _edge_code(corner_gids, common):
    """Transform code putting the shared edge into standard position.

    The shared edge is traversed from the smaller to the larger global
    vertex id on both elements so the singular diagonal s1 = t1 matches.
    """
    ga, gb = common
    for edge, (c0, c1) in enumerate(_EDGE_CORNERS):
        pair = (int(corner_gids[c0]), int(corner_gids[c1]))
        if pair == (ga, gb):
            return _EDGE_CODES[edge][0]
        if pair == (gb, ga):
            return _EDGE_CODES[edge][1]
    raise TopologyError("shared vertices do not form an element edge")


def _vertex_code(corner_gids, gid):
    for c in range(4):
        if int(corner_gids[c]) == gid:
            return _VERTEX_CODES[c]
    raise TopologyError("shared vertex is not an element corner")


# ---------------------------------------------------------------------------
# operator set
# ---------------------------------------------------------------------------

class OperatorSet:
    """Assembled Galerkin matrices on one surface.

    Attributes
    ----------
    single : (n_D, n_N) single-layer matrix, continuous test space.
    double : (n_D, n_D) double-layer matrix (kernel is the normal
        derivative of the periodic kernel in its second argument).
    single_nn : (n_N, n_N) single-layer Gram matrix in the Neumann
        space, or None unless requested (it is SPD up to quadrature).
    mass_d, mass_n, mass_mix : mass matrices D x D, N x N and D x N.
    flux : (n_N, 3) moments of the coordinate directions against the
        Neumann basis, column i holding integrals of <e_i, n> phi.
    flux_d : (n_D, 3) same moments against the Dirichlet basis.
    """

    def __init__(self, single, double, single_nn, mass_d, mass_n, mass_mix,
                 flux, flux_d):
        self.single = single
        self.double = double
        self.single_nn = single_nn
        self.mass_d = mass_d
        self.mass_n = mass_n
        self.mass_mix = mass_mix
        self.flux = flux
        self.flux_d = flux_d


class QuadratureScheme:
    """Quadrature orders for the Galerkin assembly.

    `far_orders` maps a distance-to-diameter ratio threshold to a
    tensor-Gauss order (applied top-down, first match wins); pairs
    closer than every threshold use `near_order`.  `singular_order`
    drives the regularizing rules for adjacent pairs and `mass_order`
    the local mass/flux integrals.
    """

    def __init__(self, far_orders=((4.0, 3), (2.0, 4)), near_order=5,
                 singular_order=5, smooth_order=5, mass_order=6):
        self.far_orders = tuple((float(t), int(o)) for t, o in far_orders)
        self.near_order = int(near_order)
        self.singular_order = int(singular_order)
        self.smooth_order = int(smooth_order)
        self.mass_order = int(mass_order)
        orders = [o for _, o in self.far_orders] + [
            self.near_order, self.singular_order, self.smooth_order,
            self.mass_order]
        if min(orders) < 1:
            raise ParameterError("quadrature orders must be at least 1")


def _tensor_basis(space, order):
    """Per-element tensor basis values at the order x order Gauss grid."""
    x, _ = gauss01(order)
    bu = space.basis_at(x)[space.grid.elem_ku]
    bv = space.basis_at(x)[space.grid.elem_kv]
    d1 = space.degree + 1
    bas = np.einsum("eiq,ejr->eijqr", bu, bv).reshape(
        space.grid.n_elements, d1 * d1, order * order)
    return np.ascontiguousarray(bas)


def assemble_operators(surface, space_d, space_n, kernel, scheme=None,
                       want_single_nn=False):
    """Assemble all Galerkin operators on `surface`.

    `space_d` is the (continuous) Dirichlet trace space, `space_n` the
    (discontinuous) Neumann space; both must share the element grid of
    `surface`.  Raises AssemblyError on non-finite entries.
    """
    if scheme is None:
        scheme = QuadratureScheme()
    grid = surface.grid
    n_d, n_n = space_d.n_dofs, space_n.n_dofs
    if not np.array_equal(space_d.local_coeffs, space_n.local_coeffs):
        raise AssemblyError(
            "Dirichlet and Neumann spaces must share degree and level")

    mat_s = np.zeros((n_d, n_n))
    mat_k = np.zeros((n_d, n_d))
    mat_snn = np.zeros((n_n, n_n) if want_single_nn else (1, 1))

    edge_p, edge_c, vert_p, vert_c, far_p = classify_pairs(grid)

    # --- separated pairs, graded tensor Gauss on the full kernel
    cent, diam = surface.element_centroids_diams()
    if far_p.size:
        d = np.linalg.norm(cent[far_p[:, 0]] - cent[far_p[:, 1]], axis=1)
        ratio = d / np.maximum(diam[far_p[:, 0]], diam[far_p[:, 1]])
        order_of = np.full(len(far_p), scheme.near_order, dtype=np.int64)
        for thresh, order in sorted(scheme.far_orders):
            order_of[ratio >= thresh] = order
        for order in np.unique(order_of):
            pairs = np.ascontiguousarray(far_p[order_of == order])
            x, nrm, w, _ = surface.quad_geometry(int(order))
            bas = _tensor_basis(space_d, int(order))
            _far_assemble(pairs, x, nrm, w, bas,
                          space_d.elem_dofs, space_n.elem_dofs,
                          IMAGES, kernel.expo, kernel.coef, False,
                          mat_s, mat_k, mat_snn, want_single_nn)

    # --- adjacent pairs: smooth remainder by tensor Gauss ...
    self_p = np.arange(grid.n_elements, dtype=np.int64)[:, None].repeat(2, 1)
    near = np.concatenate([self_p, edge_p, vert_p], axis=0)
    x, nrm, w, _ = surface.quad_geometry(scheme.smooth_order)
    bas = _tensor_basis(space_d, scheme.smooth_order)
    _far_assemble(np.ascontiguousarray(near), x, nrm, w, bas,
                  space_d.elem_dofs, space_n.elem_dofs,
                  IMAGES, kernel.expo, kernel.coef, True,
                  mat_s, mat_k, mat_snn, want_single_nn)

    # --- ... plus the singular free-space image via regularizing rules
    args = (surface.newton, surface.off_u.astype(np.float64),
            surface.off_v.astype(np.float64), surface.orientation,
            space_d.local_coeffs, grid.elem_ku, grid.elem_kv,
            space_d.elem_dofs, space_n.elem_dofs,
            mat_s, mat_k, mat_snn, want_single_nn)
    zero2 = np.zeros((grid.n_elements, 2), dtype=np.int64)
    _singular_assemble(self_p, zero2,
                       coincident_rule(scheme.singular_order), *args)
    if edge_p.size:
        _singular_assemble(edge_p, edge_c,
                           edge_rule(scheme.singular_order), *args)
    if vert_p.size:
        _singular_assemble(vert_p, vert_c,
                           vertex_rule(scheme.singular_order), *args)

    # --- local mass and flux integrals
    x, nrm, w, _ = surface.quad_geometry(scheme.mass_order)
    bas = _tensor_basis(space_d, scheme.mass_order)
    nb = bas.shape[1]
    blocks = np.einsum("eiq,eq,ejq->eij", bas, w, bas, optimize=True)
    mass_d = np.zeros((n_d, n_d))
    mass_n = np.zeros((n_n, n_n))
    mass_mix = np.zeros((n_d, n_n))
    dd = space_d.elem_dofs
    dn = space_n.elem_dofs
    np.add.at(mass_d, (dd[:, :, None], dd[:, None, :]), blocks)
    np.add.at(mass_n, (dn[:, :, None], dn[:, None, :]), blocks)
    np.add.at(mass_mix, (dd[:, :, None], dn[:, None, :]), blocks)
    flux_blocks = np.einsum("eiq,eq,eqc->eic", bas, w, nrm, optimize=True)
    flux = np.zeros((n_n, 3))
    flux_d = np.zeros((n_d, 3))
    cols = np.arange(3)[None, None, :]
    np.add.at(flux, (dn[:, :, None], cols), flux_blocks)
    np.add.at(flux_d, (dd[:, :, None], cols), flux_blocks)

    ops = OperatorSet(mat_s, mat_k,
                      mat_snn if want_single_nn else None,
                      mass_d, mass_n, mass_mix, flux, flux_d)
    for name in ("single", "double", "single_nn", "mass_d", "mass_n",
                 "mass_mix", "flux", "flux_d"):
        arr = getattr(ops, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            raise AssemblyError(f"non-finite entries in operator '{name}'")
    return ops

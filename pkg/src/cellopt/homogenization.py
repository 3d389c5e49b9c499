"""Effective diffusion tensor and its shape derivative.

The homogenized tensor of the perforated cell is assembled from the
cavity volume and boundary moments of the cell-problem traces.  The
shape derivative of each tensor entry with respect to a normal
displacement field is a weighted boundary integral of the tangential
trace gradients, from which the gradient of the tracking functional in
the design coefficients follows by linearity.
"""

import numpy as np

from .quadrature import gauss01


def _surface_data(surface, solution, order):
    """Per-quad-point geometry, traces and tangential gradients."""
    gx, gw = gauss01(order)
    pos, du, dv = surface.eval_grid(gx, gx)
    cross = surface.orientation * np.cross(du, dv)
    g = np.linalg.norm(cross, axis=-1)
    normal = cross / g[..., None]
    weights = np.outer(gw, gw)[None] * g

    w_val = solution.eval(gx, gx)                    # (E, Q, Q, 3)
    w_du, w_dv = solution.eval_derivs(gx, gx)
    # tangential gradient via the first fundamental form
    e_uu = np.einsum("eqrc,eqrc->eqr", du, du)
    e_uv = np.einsum("eqrc,eqrc->eqr", du, dv)
    e_vv = np.einsum("eqrc,eqrc->eqr", dv, dv)
    det = (e_uu * e_vv - e_uv * e_uv)[..., None]
    a = (e_vv[..., None] * w_du - e_uv[..., None] * w_dv) / det
    b = (e_uu[..., None] * w_dv - e_uv[..., None] * w_du) / det
    grad = (du[..., None] * a[..., None, :]
            + dv[..., None] * b[..., None, :])       # (E, Q, Q, 3, i)
    return pos, normal, weights, w_val, grad


def effective_tensor(surface, ops, solution):
    """Homogenized 3x3 diffusion tensor of the perforated cell.

    a_ij = delta_ij (1 - |cavity|) - boundary moment of w_i against
    <e_j, n>; the moment is evaluated exactly from the assembled flux
    vector of the Dirichlet space.
    """
    vol = surface.cavity_volume()
    moments = solution.traces.T @ ops.flux_d        # (i, j)
    return (1.0 - vol) * np.eye(3) - moments


def shape_functional(tensor, target):
    """Tracking functional J = ||A - B||_F^2 / 2."""
    diff = np.asarray(tensor) - np.asarray(target)
    return 0.5 * float(np.sum(diff * diff))


def shape_derivative_coefficients(surface, solution, order=6):
    """Shape derivatives of the tensor entries for normal perturbations.

    Returns a callable-friendly pair ``(density, geom)`` folded into a
    function: for a displacement field sampled on the same quadrature
    grid, ``a'_ij[V] = sum_q density_ij(q) <V(q), n(q)> w(q)``.  Here
    the density is

        <e_i, n><e_j, n> - <e_i + grad_G w_i, e_j + grad_G w_j>

    with grad_G the tangential surface gradient; the sign reflects the
    normal pointing out of the cavity (growing the cavity shrinks the
    tensor).
    """
    pos, normal, weights, _, grad = _surface_data(surface, solution, order)
    eye = np.eye(3)
    # t_i = e_i + tangential gradient of w_i, laid out (E, Q, Q, 3, i)
    t = grad + eye[None, None, None]
    density = np.einsum("eqrc,ci,eqrd,dj->eqrij", normal, eye, normal, eye)
    density -= np.einsum("eqrci,eqrcj->eqrij", t, t)
    return pos, normal, weights, density


def shape_gradient(surface, solution, tensor, target, fields, order=6):
    """Gradient of J in the coefficients of the displacement basis.

    `fields` evaluates the displacement basis on the quadrature grid:
    an array of shape (p, E, Q, Q, 3).  Returns the p-vector with
    entries sum_ij (a_ij - b_ij) a'_ij[V_k].
    """
    _, normal, weights, density = shape_derivative_coefficients(
        surface, solution, order)
    diff = np.asarray(tensor) - np.asarray(target)
    scalar = np.einsum("eqrij,ij->eqr", density, diff)
    vn = np.einsum("keqrc,eqrc->keqr", fields, normal)
    return np.einsum("keqr,eqr,eqr->k", vn, scalar, weights)


def tensor_derivative(surface, solution, field, order=6):
    """Full 3x3 shape derivative a'[V] for one displacement field.

    `field` has shape (E, Q, Q, 3) on the order x order Gauss grid.
    """
    _, normal, weights, density = shape_derivative_coefficients(
        surface, solution, order)
    vn = np.einsum("eqrc,eqrc->eqr", field, normal)
    return np.einsum("eqrij,eqr,eqr->ij", density, vn, weights)

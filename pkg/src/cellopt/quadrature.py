"""Gauss rules on [0,1] and regularizing rules for singular panel pairs.

The singular rules integrate a 4D panel-pair integrand F(s1, s2, t1, t2)
over [0,1]^4 when the kernel behaves like 1/|x(s) - y(t)| (or up to
1/|.|^2 for the double layer).  Each rule is returned as an (R, 5) array
of rows (s1, s2, t1, t2, weight) in a standard configuration:

* coincident -- both panels identical, singular at s = t,
* edge       -- shared edge at s2 = 0 and t2 = 0, traversed by s1 = t1,
* vertex     -- shared vertex at s = t = (0, 0).

The relative-coordinate/polar transform (coincident) and the Duffy-type
max-coordinate splits (edge, vertex) remove the singularity, so plain
tensor Gauss converges rapidly on the transformed integrand.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss01(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss01_tensor(n):
    """Tensor Gauss rule on the unit square, flattened to (n*n, 3)."""
    x, w = gauss01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    return u.ravel(), v.ravel(), ww.ravel()


def _tensor4(n):
    x, w = gauss01(n)
    a = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), axis=-1).reshape(-1, 4)
    ww = w[:, None, None, None] * w[None, :, None, None] * w[None, None, :, None] * w[None, None, None, :]
    return a, ww.ravel()


@lru_cache(maxsize=None)
def coincident_rule(n):
    """Rule for identical panels via relative coordinates and polar angles.

    Substituting u = t - s and s = s(sigma, u) reduces the integral to
    int_{[-1,1]^2} (1-|u1|)(1-|u2|) int_{[0,1]^2} F dsigma du; the u
    integral is split into eight octant sectors (so that |u1| and |u2|
    are smooth within each) where the radial Jacobian cancels the 1/|u|
    singularity.
    """
    pts, w4 = _tensor4(n)
    th_hat, rho_hat, s1_hat, s2_hat = pts.T
    rows = []
    for sector in range(8):
        theta = (sector + th_hat) * (np.pi / 4.0)
        rho_max = 1.0 / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))
        rho = rho_hat * rho_max
        u1 = rho * np.cos(theta)
        u2 = rho * np.sin(theta)
        s1 = np.maximum(0.0, -u1) + s1_hat * (1.0 - np.abs(u1))
        s2 = np.maximum(0.0, -u2) + s2_hat * (1.0 - np.abs(u2))
        wgt = w4 * (np.pi / 4.0) * rho_max * rho * (1.0 - np.abs(u1)) * (1.0 - np.abs(u2))
        rows.append(np.stack([s1, s2, s1 + u1, s2 + u2, wgt], axis=1))
    return np.concatenate(rows, axis=0)


@lru_cache(maxsize=None)
def edge_rule(n):
    """Rule for panels sharing the edge s2 = t2 = 0 with s1 = t1 aligned.

    With d = t1 - s1, the singularity sits at (d, s2, t2) = 0.  Splitting
    by the largest of (|d|, s2, t2) and scaling the other two by it gives
    a w^2 Jacobian against the 1/w kernel.
    """
    pts, w4 = _tensor4(n)
    w, a, b, sig = pts.T
    rows = []
    for sign in (1.0, -1.0):
        for region in range(3):
            if region == 0:
                d, s2, t2 = sign * w, w * a, w * b
            elif region == 1:
                d, s2, t2 = sign * w * a, w, w * b
            else:
                d, s2, t2 = sign * w * a, w * b, w
            s1 = np.maximum(0.0, -d) + sig * (1.0 - np.abs(d))
            wgt = w4 * w * w * (1.0 - np.abs(d))
            rows.append(np.stack([s1, s2, s1 + d, t2, wgt], axis=1))
    return np.concatenate(rows, axis=0)


@lru_cache(maxsize=None)
def vertex_rule(n):
    """Rule for panels sharing the vertex s = t = (0, 0).

    Duffy split by the largest of the four coordinates; the w^3 Jacobian
    dominates the 1/w (or 1/w^2) kernel.
    """
    pts, w4 = _tensor4(n)
    w, a, b, c = pts.T
    rows = []
    for region in range(4):
        coords = [w * a, w * b, w * c]
        coords.insert(region, w)
        s1, s2, t1, t2 = coords
        wgt = w4 * w ** 3
        rows.append(np.stack([s1, s2, t1, t2, wgt], axis=1))
    return np.concatenate(rows, axis=0)

"""Solution of the periodic cell problems on the cavity boundary.

For each coordinate direction the interior potential has Neumann trace
``-<n, e_i>`` on the cavity boundary; the Neumann-to-Dirichlet map of
the periodic kernel yields the Dirichlet trace w_i, from which the
effective tensor and shape gradients are built.  The traces are only
determined up to a constant and are gauged to zero surface mean.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import SolverError

#: relative condition estimate beyond which the N2D solve is refused
CONDITION_LIMIT = 1e12


class CellSolution:
    """Dirichlet traces of the three cell problems.

    Attributes
    ----------
    traces : (n_D, 3) spline coefficients, column i holding w_i.
    space : the Dirichlet trace space the coefficients live in.
    """

    def __init__(self, traces, space):
        self.traces = traces
        self.space = space

    def eval(self, gu, gv):
        """Trace values on a per-element tensor grid, (E, Qu, Qv, 3)."""
        return np.stack([self.space.eval(self.traces[:, i], gu, gv)
                         for i in range(3)], axis=-1)

    def eval_derivs(self, gu, gv):
        """Local parameter derivatives of the traces, two such stacks."""
        du = np.stack([self.space.eval(self.traces[:, i], gu, gv, deriv="u")
                       for i in range(3)], axis=-1)
        dv = np.stack([self.space.eval(self.traces[:, i], gu, gv, deriv="v")
                       for i in range(3)], axis=-1)
        return du, dv


def solve_cell_problems(ops, space_d):
    """Neumann-to-Dirichlet solve for the three coordinate directions.

    Solves ``(M_D/2 - K) w_i = S M_N^{-1} b_i`` with one factorization
    for all right-hand sides and gauges each trace to zero surface mean.
    Raises SolverError when the system is singular or its estimated
    condition number exceeds CONDITION_LIMIT.
    """
    lhs = 0.5 * ops.mass_d - ops.double
    rhs = ops.single @ np.linalg.solve(ops.mass_n, ops.flux)
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SolverError(
            f"Neumann-to-Dirichlet system is ill-conditioned "
            f"(cond ~ {cond:.3e})")
    try:
        factor = lu_factor(lhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SolverError(f"N2D factorization failed: {exc}") from exc
    traces = lu_solve(factor, rhs)
    # gauge: zero surface mean
    ones = np.ones(ops.mass_d.shape[0])
    area = ones @ ops.mass_d @ ones
    mean = (ones @ ops.mass_d @ traces) / area
    traces = traces - mean[None, :]
    return CellSolution(traces, space_d)

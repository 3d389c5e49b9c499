"""Gradient descent on the cavity shape for tensor tracking.

The design vector holds coefficients of the low-rank displacement
basis; every evaluation deforms the reference surface, reassembles the
boundary operators, solves the cell problems and computes the tracking
functional J = ||A - B||_F^2 / 2.  Steps follow the negative shape
gradient with a three-point quadratic line search; proposed shapes
that leave the cell or degenerate are treated as infinitely bad.
"""

import time

import numpy as np

from .bem import QuadratureScheme, assemble_operators
from .cell import solve_cell_problems
from .deformation import displacement_basis
from .errors import LineSearchError, StepRejectedError
from .geometry import PolynomialSurface, apply_displacement
from .homogenization import effective_tensor, shape_functional, shape_gradient
from .quadrature import gauss01
from .spaces import TraceSpace


class OptimizationConfig:
    """Parameters of a tensor-tracking run."""

    def __init__(self, target, n_fields=16, ell=1.0, spline_degree=2,
                 geometry_degree=(4, 4), max_iterations=25, j_tol=1e-5,
                 step_scale=0.1, max_halvings=10, gradient_order=6,
                 chol_tol=1e-6, seed=0):
        self.target = np.asarray(target, dtype=float)
        if self.target.shape != (3, 3):
            raise ValueError("target tensor must be 3x3")
        self.n_fields = int(n_fields)
        self.ell = float(ell)
        self.spline_degree = int(spline_degree)
        self.geometry_degree = tuple(geometry_degree)
        self.max_iterations = int(max_iterations)
        self.j_tol = float(j_tol)
        self.step_scale = float(step_scale)
        self.max_halvings = int(max_halvings)
        self.gradient_order = int(gradient_order)
        self.chol_tol = float(chol_tol)
        self.seed = int(seed)


class IterationRecord:
    """One accepted optimization step."""

    __slots__ = ("index", "functional", "tensor", "grad_norm", "step",
                 "wall_ms", "y", "rejected")

    def __init__(self, index, functional, tensor, grad_norm, step, wall_ms,
                 y, rejected):
        self.index = index
        self.functional = functional
        self.tensor = tensor
        self.grad_norm = grad_norm
        self.step = step
        self.wall_ms = wall_ms
        self.y = y
        self.rejected = rejected


class Evaluation:
    """State of one admissible design point."""

    __slots__ = ("y", "surface", "ops", "solution", "tensor", "functional")

    def __init__(self, y, surface, ops, solution, tensor, functional):
        self.y = y
        self.surface = surface
        self.ops = ops
        self.solution = solution
        self.tensor = tensor
        self.functional = functional


class ShapeOptimizer:
    """Tensor-tracking shape optimization on a fixed element grid."""

    def __init__(self, grid, kernel, config, scheme=None):
        self.grid = grid
        self.kernel = kernel
        self.config = config
        self.scheme = scheme if scheme is not None else QuadratureScheme()
        self.reference = PolynomialSurface(grid, config.geometry_degree)
        self.space_d = TraceSpace(grid, config.spline_degree, continuous=True)
        self.space_n = TraceSpace(grid, config.spline_degree,
                                  continuous=False)
        self.fields, self.eigenvalues, self.factor = displacement_basis(
            grid.unique_points, config.ell, config.n_fields,
            tol=config.chol_tol)
        # displacement basis interpolated like the geometry, once per run
        gx, _ = gauss01(config.gradient_order)
        stencils = self.fields[:, self.reference.stencil_gid]
        self._field_quad = np.stack(
            [self.reference.eval_grid(gx, gx, values=stencils[k])[0]
             for k in range(config.n_fields)])
        self._rejected = 0

    # -- functional and gradient ---------------------------------------

    def evaluate(self, y):
        """Assemble, solve and measure one design point.

        Raises StepRejectedError for inadmissible shapes.
        """
        surface = apply_displacement(self.reference, self.fields, y)
        ops = assemble_operators(surface, self.space_d, self.space_n,
                                 self.kernel, self.scheme)
        solution = solve_cell_problems(ops, self.space_d)
        tensor = effective_tensor(surface, ops, solution)
        return Evaluation(np.array(y, dtype=float), surface, ops, solution,
                          tensor, shape_functional(tensor, self.config.target))

    def gradient(self, evaluation):
        """Shape gradient of J in the displacement coefficients."""
        return shape_gradient(evaluation.surface, evaluation.solution,
                              evaluation.tensor, self.config.target,
                              self._field_quad,
                              order=self.config.gradient_order)

    def _probe(self, y):
        try:
            return self.evaluate(y)
        except StepRejectedError:
            self._rejected += 1
            return None

    def line_search(self, current, direction):
        """Three-point quadratic line search along `direction`.

        Probes t0 and 2 t0 with t0 = step_scale / |direction|, fits a
        parabola through the three functional values and also evaluates
        its interior minimizer when it exists; the best decreasing probe
        wins.  The step is halved on failure, up to max_halvings times.
        """
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise LineSearchError("zero search direction")
        t0 = self.config.step_scale / norm
        j0 = current.functional
        for _ in range(self.config.max_halvings + 1):
            cands = []
            e1 = self._probe(current.y + t0 * direction)
            e2 = self._probe(current.y + 2.0 * t0 * direction)
            j1 = e1.functional if e1 else np.inf
            j2 = e2.functional if e2 else np.inf
            if e1:
                cands.append((j1, t0, e1))
            if e2:
                cands.append((j2, 2.0 * t0, e2))
            if np.isfinite(j1) and np.isfinite(j2):
                # parabola through (0, j0), (t0, j1), (2 t0, j2)
                curve = j0 - 2.0 * j1 + j2
                if curve > 0.0:
                    t_star = t0 * (3.0 * j0 - 4.0 * j1 + j2) / (2.0 * curve)
                    if 0.0 < t_star < 2.0 * t0:
                        e_star = self._probe(current.y + t_star * direction)
                        if e_star:
                            cands.append((e_star.functional, t_star, e_star))
            cands = [c for c in cands if np.isfinite(c[0])]
            if cands:
                best = min(cands, key=lambda c: c[0])
                if best[0] < j0:
                    return best[1], best[2]
            t0 *= 0.5
        raise LineSearchError(
            f"no decreasing step within {self.config.max_halvings} halvings")

    # -- main loop ------------------------------------------------------

    def run(self, y0=None, callback=None):
        """Gradient descent until J < j_tol or the iteration cap.

        `callback(record, evaluation)` fires after every accepted step
        (and once for the initial point with step 0).  Returns the final
        Evaluation and the list of IterationRecords.
        """
        cfg = self.config
        y = np.zeros(cfg.n_fields) if y0 is None else np.asarray(y0, float)
        t_start = time.perf_counter()
        self._rejected = 0
        current = self.evaluate(y)
        records = []

        def record(step):
            rec = IterationRecord(
                len(records), current.functional, current.tensor.copy(),
                float(np.linalg.norm(grad)), step,
                1000.0 * (time.perf_counter() - t_start),
                current.y.copy(), self._rejected)
            records.append(rec)
            if callback is not None:
                callback(rec, current)

        grad = self.gradient(current)
        record(0.0)
        while current.functional >= cfg.j_tol and \
                len(records) <= cfg.max_iterations:
            self._rejected = 0
            step, current = self.line_search(current, -grad)
            grad = self.gradient(current)
            record(step)
        converged = current.functional < cfg.j_tol
        return current, records, converged

"""Shape optimization of periodic cavities for effective diffusion.

A boundary-element pipeline on the unit cell: fit a periodic kernel,
assemble Neumann-to-Dirichlet operators on a multipatch cavity surface,
solve the three cell problems, evaluate the homogenized diffusion
tensor and descend its tracking functional along Hadamard shape
gradients expanded in a low-rank smooth displacement basis.
"""

from .bem import OperatorSet, QuadratureScheme, assemble_operators
from .cell import CellSolution, solve_cell_problems
from .deformation import displacement_basis, matern_9_2, pivoted_cholesky
from .errors import (AssemblyError, CelloptError, FittingError,
                     GeometryError, LineSearchError, MissingKernelCacheError,
                     ParameterError, SingularEvaluationError, SolverError,
                     StepRejectedError, TopologyError)
from .geometry import (ElementGrid, PolynomialSurface, apply_displacement,
                       generate_primitive, refine_to_level)
from .homogenization import effective_tensor, shape_functional, shape_gradient
from .kernel import PeriodicKernel
from .optimize import (Evaluation, IterationRecord, OptimizationConfig,
                       ShapeOptimizer)
from .spaces import TraceSpace

__version__ = "0.1.0"

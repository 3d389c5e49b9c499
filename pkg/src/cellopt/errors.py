"""Exception hierarchy shared across the package."""


class CelloptError(Exception):
    """Base class for all package errors."""


class ParameterError(CelloptError, ValueError):
    """Invalid argument (degree too high, non-positive length, ...)."""


class GeometryError(CelloptError):
    """Geometry violates a hard constraint (out of cell, degenerate)."""


class TopologyError(CelloptError):
    """Patches do not form a conforming multipatch surface."""


class FittingError(CelloptError):
    """Kernel coefficient fit failed (rank deficiency etc.)."""


class SingularEvaluationError(CelloptError):
    """Kernel evaluated at the singular point z = 0."""


class AssemblyError(CelloptError):
    """Non-finite matrix entry during operator assembly."""


class SolverError(CelloptError):
    """Linear system singular or badly conditioned."""


class StepRejectedError(CelloptError):
    """A proposed design update produced an inadmissible surface."""


class LineSearchError(CelloptError):
    """Line search could not find a decreasing step."""


class MissingKernelCacheError(CelloptError):
    """No kernel coefficient cache and fit-on-demand not requested."""

"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical-tolerance failures with 3 and resource caps with 4.
"""


class HomoflowError(Exception):
    """Base class for all package errors."""


class ConfigError(HomoflowError, ValueError):
    """Invalid or missing configuration / parameter value."""


class HorizonError(HomoflowError):
    """Requested time lies beyond the existence horizon of L(t)."""


class ClassificationError(HomoflowError):
    """No asymptotic template fits the deformation matrix."""


class ToleranceError(HomoflowError):
    """A numerical procedure failed to meet its tolerance."""


class StiffnessError(ToleranceError):
    """Adaptive step size underflowed."""


class ConvergenceError(ToleranceError):
    """An iterative solver did not converge."""


class ResolutionError(ToleranceError):
    """Discretisation grid too coarse for the requested problem."""


class WindowError(ToleranceError):
    """Fit window too short or regressors nearly collinear."""


class NoCycleError(HomoflowError):
    """The coupling graph is acyclic."""


class ResourceCapError(HomoflowError):
    """A hard enumeration or memory cap was hit."""

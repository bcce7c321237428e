"""Exception hierarchy shared by all modules."""


class MetacontError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MetacontError, ValueError):
    """A state or parameter lies outside the admissible domain of a model."""


class PreconditionError(MetacontError, ValueError):
    """Inputs violate a documented precondition."""


class CapacityError(MetacontError, ValueError):
    """Problem size exceeds what a dense method is allowed to handle."""


class NumericalFailure(MetacontError, ArithmeticError):
    """An iterative kernel (QR iteration, LU, ...) broke down."""


class ConvergenceError(MetacontError, ArithmeticError):
    """An iteration exhausted its budget or diverged.

    Attributes
    ----------
    residual : float
        Last measured residual or increment norm.
    iterations : int
        Number of iterations performed before giving up.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularJacobianError(ConvergenceError):
    """Newton's method met a (numerically) singular Jacobian."""


class ConfigError(MetacontError, ValueError):
    """A run configuration failed validation."""

"""Exception hierarchy shared by every ldprate module."""


class LdpError(Exception):
    """Base class for all ldprate errors."""


class UnknownModelError(LdpError, KeyError):
    """Raised when a built-in model name is not registered."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown model"


class ConfigurationError(LdpError, ValueError):
    """Invalid action/quadrature/grid configuration."""


class DomainError(LdpError, ValueError):
    """An argument lies outside the domain of the operation."""


class StepRestrictionError(LdpError, ValueError):
    """The step size violates h <= 1/(2L)."""


class NonConvergenceError(LdpError, RuntimeError):
    """The implicit fixed-point iteration of a theta step did not converge."""


class NumericalFailure(LdpError, ArithmeticError):
    """A non-finite action or gradient was met during minimization.

    The offending iterate (stacked interior nodes) is kept on ``iterate``.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class OptimizerFailure(LdpError, RuntimeError):
    """A study aborted because a minimization failed at ``coordinates``."""

    def __init__(self, message, coordinates=None):
        super().__init__(message)
        self.coordinates = coordinates

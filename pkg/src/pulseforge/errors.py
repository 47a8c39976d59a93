"""Exception hierarchy shared by all modules."""


class PulseForgeError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(PulseForgeError, ValueError):
    """Invalid input parameters (bad coefficients, grids, targets, configs)."""


class DomainError(ValidationError):
    """Argument outside the domain of a function, e.g. theta not in [0, pi]."""


class InfiniteTimeError(DomainError):
    """The erf schedule reaches theta = 0 or pi only at infinite time."""


class ConvergenceError(PulseForgeError):
    """Newton iteration did not converge.

    The last iterate and its residual norm are kept so callers can inspect
    or restart from them.
    """

    def __init__(self, message, last_iterate=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.iterations = iterations


class SingularJacobianError(ConvergenceError):
    """The finite-difference Jacobian could not be inverted."""


class StiffnessError(PulseForgeError):
    """The ODE integrator failed (step size underflow)."""


class PrecisionError(PulseForgeError):
    """A measured quantity fell below the numerical floor."""

"""Exception hierarchy shared by all modules."""


class TrailerMpcError(Exception):
    """Base class for every error raised by this package."""


class SingularSteeringError(TrailerMpcError):
    """A trailer steering angle makes ``cos(gamma)`` vanish."""


class DegenerateConfigurationError(TrailerMpcError):
    """The longitudinal velocity factor of the last trailer is not positive."""


class InfeasiblePathError(TrailerMpcError):
    """A generated nominal path leaves the admissible state or input set."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class OutOfRangeError(TrailerMpcError):
    """Arc length lookup outside the stored nominal path."""


class ProjectionInvalidError(TrailerMpcError):
    """The Frenet transformation is not valid at the projected point."""


class FrenetDomainError(TrailerMpcError):
    """Error-model evaluation outside the validity domain of the Frenet frame."""


class DimensionError(TrailerMpcError, ValueError):
    """Inconsistent array dimensions."""


class ConvergenceError(TrailerMpcError):
    """An iterative solver did not converge."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class HorizonExceedsPathError(TrailerMpcError):
    """The prediction horizon runs past the end of the nominal path."""


class ConfigError(TrailerMpcError):
    """Invalid scenario or vehicle configuration."""

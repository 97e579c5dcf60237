"""Exception hierarchy shared by all escortlab modules."""


class EscortLabError(Exception):
    """Base class for library errors."""


class DomainError(EscortLabError, ValueError):
    """Input outside the domain of an operation or model chart."""


class NumericError(EscortLabError, ArithmeticError):
    """A numerical procedure failed to converge.

    ``residual`` carries the best residual or value reached, when known.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LiftError(EscortLabError):
    """Path continuation could not choose a unique lift."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PreconditionError(DomainError):
    """A documented precondition does not hold."""


class FitError(EscortLabError):
    """Escort fitting found no admissible times."""


class UnsupportedModelError(DomainError):
    """Operation not available for the given model chart."""


class VisibilityError(EscortLabError):
    """No geodesic joins the requested pair of boundary directions."""


class DomainExitError(EscortLabError):
    """A trajectory left the chart domain; ``last_state`` is the last valid sample."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class CheckFailure(EscortLabError, AssertionError):
    """A verification step of a construction did not pass."""


class ConfigError(EscortLabError):
    """Invalid experiment configuration."""

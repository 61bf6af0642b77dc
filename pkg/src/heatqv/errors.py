"""Exception types shared across the package."""


class HeatQVError(Exception):
    """Base class for all package errors."""


class DomainError(HeatQVError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class QuadratureError(HeatQVError, ArithmeticError):
    """Adaptive quadrature failed to meet the requested tolerance.

    Attributes
    ----------
    value : float
        Best estimate reached before giving up.
    error : float
        Achieved absolute error estimate.
    """

    def __init__(self, message, value=float("nan"), error=float("nan")):
        super().__init__(message)
        self.value = value
        self.error = error


class CapacityError(HeatQVError, ValueError):
    """A grid exceeds the configured joint-point cap for dense sampling."""


class FactorizationError(HeatQVError, ArithmeticError):
    """Cholesky factorization failed after exhausting jitter retries."""

    def __init__(self, message, jitter=float("nan")):
        super().__init__(message)
        self.jitter = jitter


class ConfigError(HeatQVError, ValueError):
    """Invalid configuration (stability guard, bandwidth, config file)."""

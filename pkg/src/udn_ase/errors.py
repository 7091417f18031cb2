"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class QuadratureError(ArithmeticError):
    """Base class for numerical integration and root finding failures."""


class ConvergenceError(QuadratureError):
    """Adaptive refinement stopped before reaching the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DivergenceError(QuadratureError):
    """A semi-infinite integrand does not decay fast enough to be integrable."""


class BracketError(QuadratureError):
    """The root-finding bracket does not contain a sign change."""


class ConfigError(ValueError):
    """A sweep configuration is malformed; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key

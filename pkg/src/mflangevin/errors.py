"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input data (NaN, bad shapes, non-normalized measures, ...)."""


class SingularityError(ValueError):
    """Degenerate covariance or other singular linear-algebra input."""


class DivergenceError(RuntimeError):
    """A simulation or solver step produced non-finite or negative state."""

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


class FitError(RuntimeError):
    """Rate fitting failed (too few usable points)."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""

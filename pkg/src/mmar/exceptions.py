"""Exception types shared across the package."""


class MmarError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefiniteError(MmarError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class InvalidParameterError(MmarError, ValueError):
    """A parameter vector or model violates the model constraints."""


class DataError(MmarError, ValueError):
    """Input data is malformed (shapes, missing cells, bad time index)."""


class DivergenceError(MmarError, RuntimeError):
    """A simulation or fit produced non-finite or exploding values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EstimationError(MmarError, RuntimeError):
    """The EM machinery failed (singular systems, all starts failed, ...)."""

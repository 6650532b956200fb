"""Exception types shared across the package."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StateError(RuntimeError):
    """An operation was invoked on an object missing required solved state."""

"""Exception types shared across the package."""


class UsageError(ValueError):
    """Raised when an operation is called with invalid arguments."""


class CapabilityError(RuntimeError):
    """Raised when a function term lacks a field an operation needs."""


class NumericalError(ArithmeticError):
    """Raised when an iterate becomes non-finite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration

"""Exception hierarchy.

Each family maps onto one CLI exit code so that a failing pipeline stage can
be reported without inspecting messages.
"""


class NarxError(Exception):
    exit_code = 1


class ValidationError(NarxError, ValueError):
    """Invalid configuration or arguments."""

    exit_code = 1


class DataError(NarxError, ValueError):
    """Malformed, missing or inconsistent input data."""

    exit_code = 2


class NumericalError(NarxError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""

    exit_code = 3


class UndefinedCorrelationError(NumericalError):
    pass


class DegenerateTargetError(NumericalError):
    pass


class ConditioningError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class IntegratorError(NumericalError):
    pass

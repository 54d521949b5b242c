"""Exception hierarchy shared by all modules."""


class DelayHJBError(Exception):
    """Base class for every error raised by the package."""

    code = "error"


class GridError(DelayHJBError, ValueError):
    """Inputs do not share a grid, or a time/shift is off the grid."""

    code = "grid"


class BlowUpError(DelayHJBError, ArithmeticError):
    """A solver produced a non-finite or excessively large state."""

    code = "blowup"


class ConvergenceError(DelayHJBError):
    """An iteration hit its cap before reaching the requested tolerance."""

    code = "convergence"

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class BudgetExceededError(DelayHJBError):
    """Exhaustive control enumeration would exceed the configured budget."""

    code = "budget"


class ConfigError(DelayHJBError, ValueError):
    """Malformed configuration or an out-of-range problem parameter."""

    code = "config"

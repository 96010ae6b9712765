"""Exception hierarchy shared across the package."""


class DegenLabError(Exception):
    """Base class for all package errors."""


class GridError(DegenLabError, ValueError):
    """Invalid grid geometry, off-grid time, or an empty cylinder."""


class SingularityError(DegenLabError, ValueError):
    """A coefficient or derivative was requested at a singular point."""


class FitError(DegenLabError, ValueError):
    """Too few usable samples for an exponent fit."""


class DivergenceError(DegenLabError, ArithmeticError):
    """The explicit scheme produced a non-finite value."""

    def __init__(self, message, node=None, time=None):
        super().__init__(message)
        self.node = node
        self.time = time


class CFLViolation(DivergenceError):
    """Observed gradient exceeded twice the asserted gradient cap."""


class BarrierSearchError(DegenLabError, RuntimeError):
    """No barrier passed verification within the search caps."""

    def __init__(self, message, failing_condition=None):
        super().__init__(message)
        self.failing_condition = failing_condition


class DeltaSweepError(DegenLabError, RuntimeError):
    """No delta in the ladder satisfied the Bernstein verdict."""

    def __init__(self, message, best_margin=None):
        super().__init__(message)
        self.best_margin = best_margin


class ConfigError(DegenLabError, ValueError):
    """Configuration document failed validation; carries a field path."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path

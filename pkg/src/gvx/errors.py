"""Exception hierarchy shared across the package.

DomainError maps to CLI exit code 2, the ConvergenceError family to exit 3.
"""


class GvxError(Exception):
    pass


class DomainError(GvxError, ValueError):
    """Arguments outside the mathematical domain of an operation."""


class ConvergenceError(GvxError, RuntimeError):
    """A series, recursion or solve failed to reach its target accuracy."""


class CancellationAlarm(ConvergenceError):
    """Alternating-sum cancellation exceeded the reliable range.

    The message names the failing representation and a suggested alternative.
    """


class BudgetExceeded(ConvergenceError):
    """A term or iteration budget ran out before the tolerance was met."""


class ConditioningError(ConvergenceError):
    """A linear system was too ill-conditioned for a trustworthy solution."""


class NegativeDensityAlarm(ConvergenceError):
    """A density that must be nonnegative came out negative (failed solve)."""

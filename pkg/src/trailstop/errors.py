"""Exception types shared across the library."""


class TrailstopError(Exception):
    """Base class for all library-specific errors."""


class DomainError(TrailstopError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class RangeError(TrailstopError, OverflowError):
    """The result is not representable without log scaling."""


class DegenerateIntervalError(DomainError):
    """A two-sided exit interval has collapsed (y == z)."""


class UnsupportedModelError(TrailstopError):
    """The model violates a structural requirement (e.g. non-natural boundary)."""


class UnsupportedRewardError(TrailstopError):
    """The reward's generator residual changes sign more than once."""


class AssumptionError(TrailstopError):
    """A standing shape assumption failed a numeric check.

    The failed clause is recorded so callers can report it.
    """

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        msg = f"assumption failed: {clause}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NoFiniteThresholdError(TrailstopError):
    """The secant-slope maximization did not attain its supremum at a finite point."""


class IllConditionedFloorError(TrailstopError):
    """The transformed floor is too close to the identity for the value recursion."""


class AccuracyError(TrailstopError):
    """A requested accuracy could not be certified.

    Attributes:
        achieved: the error bound that was actually reached.
    """

    def __init__(self, msg: str, achieved: float):
        self.achieved = achieved
        super().__init__(f"{msg} (achieved bound {achieved:.3g})")


class HorizonError(TrailstopError):
    """Too many simulated paths were still running at the time horizon."""


class NumericFailureError(TrailstopError):
    """An internal numeric construction failed a sanity check."""


class ConfigError(TrailstopError, ValueError):
    """A run configuration could not be validated."""

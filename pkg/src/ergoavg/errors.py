"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A measure, flow, or experiment was configured inconsistently."""


class UsageError(ValueError):
    """An operation was called with arguments outside its contract."""


class UnsupportedMeasureError(ConfigurationError):
    """The requested operation is not defined for this measure variant."""


class ErgodicityRefusedError(RuntimeError):
    """A sweep was refused because the flow failed its ergodicity certificate.

    Carries the failing certificate so callers can inspect the offender.
    """

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(
            "flow failed the ergodicity certificate "
            f"(offender {certificate.offending_k}); pass waive_ergodicity=True "
            "to run a labeled non-ergodic control"
        )


class BudgetError(RuntimeError):
    """A scan exceeded its node budget.  ``partial`` holds the best result
    obtained within budget."""

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)

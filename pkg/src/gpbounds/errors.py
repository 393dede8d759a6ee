"""Exception types shared across the package."""


class GpBoundsError(Exception):
    """Base class for errors raised by this package."""


class NumericalError(GpBoundsError):
    """A linear-algebra operation failed beyond recovery.

    Carries the diagonal jitter level that was reached before giving up.
    """

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class FittingError(GpBoundsError):
    """No hyperparameter start produced a finite log marginal likelihood."""


class UnsupportedDesignError(GpBoundsError):
    """Requested (levels, variables) combination has no embedded array."""


class EvaluationError(GpBoundsError):
    """A black-box evaluation failed (bad exit, bad output, timeout, non-finite)."""


class BudgetError(GpBoundsError):
    """A grid method would exceed its evaluation guard; pass the override to proceed."""


class ConfigError(GpBoundsError):
    """A run configuration failed validation.

    ``field`` names the offending config entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

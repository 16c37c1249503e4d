"""Exception types shared across the package."""


class SidmpError(Exception):
    """Base class for all package errors."""


class ParameterError(SidmpError, ValueError):
    """A model parameter is outside its valid range."""


class DimensionError(SidmpError, ValueError):
    """State or subsystem dimensions do not line up."""


class DegenerateBasisError(SidmpError, ValueError):
    """The basis activations of a forcing function vanish numerically."""


class DomainError(SidmpError, ValueError):
    """A map was evaluated outside the region where it is invertible."""


class DivergenceError(SidmpError, ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time


class NotPeriodicError(SidmpError, ValueError):
    """Too few section crossings to estimate a period."""


class PreconditionError(SidmpError, ValueError):
    """An analysis was requested where its assumptions visibly fail."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


class NotContractingError(SidmpError, ValueError):
    """A field that must be contracting failed its sampled check."""


class UnsupportedCompositionError(SidmpError, ValueError):
    """No composition rule exists for the given layer certificates."""


class MetricBuildError(SidmpError, RuntimeError):
    """Metric synthesis could not produce a valid metric."""


class ConditioningError(SidmpError, ValueError):
    """A least-squares problem is rank deficient."""


class ConfigError(SidmpError, ValueError):
    """A scenario document is malformed.

    ``where`` names the offending field (dotted path) or ``line:col`` for
    JSON syntax errors.
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where
        self.reason = message

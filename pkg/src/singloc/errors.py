"""Exception hierarchy shared by all modules."""


class SinglocError(Exception):
    """Base class for library errors."""


class InvalidInput(SinglocError, ValueError):
    pass


class InvalidMetric(SinglocError, ValueError):
    pass


class DomainError(SinglocError, ValueError):
    """Evaluation outside the domain of a quantity (e.g. tensor on the zero section)."""


class NumericFailure(SinglocError, RuntimeError):
    pass


class NotDifferentiable(SinglocError):
    """Raised when a gradient is requested at a point with several f-geodesics."""


class AlmostDistanceViolation(SinglocError):
    """Raised when a point in the range interior has no f-geodesic at all."""


class NotApplicable(SinglocError):
    pass

"""Exception and warning types shared across nclab."""


class NclabError(Exception):
    """Base class for nclab errors."""


class IllConditionedError(NclabError, ArithmeticError):
    """A conditioning denominator underflowed or a ratio is numerically meaningless."""


class QuadratureError(NclabError, ArithmeticError):
    """An adaptive integration failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SkewSymmetryError(NclabError, ValueError):
    """A matrix that must be skew-symmetric is not."""


class DimensionError(NclabError, ValueError):
    """An oracle integral would exceed its supported dimension."""


class NumericalFlag(UserWarning):
    """Issued when a value was clamped or flushed to zero."""

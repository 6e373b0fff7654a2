"""Exception and warning types shared across the package."""


class ConformalFtsError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ConformalFtsError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(ConformalFtsError, ValueError):
    """Too few observations for the requested computation."""


class AlignmentError(ConformalFtsError, ValueError):
    """Forecasts and actuals cannot be matched by year."""


class NotCalibrableError(ConformalFtsError, RuntimeError):
    """Band calibration cannot reach the nominal coverage with finite width."""


class StreamError(ConformalFtsError, ValueError):
    """A sequential update received an unusable observation."""


class ParseError(ConformalFtsError, ValueError):
    """A data file row could not be parsed."""


class SchemaError(ConformalFtsError, ValueError):
    """A data file does not follow a recognized column layout."""


class ImputationError(ConformalFtsError, ValueError):
    """A year has too few valid rates to impute the missing ones."""


class DegenerateSpectrumWarning(UserWarning):
    """All eigenvalues fall at or below the ratio-criterion threshold."""


class FallbackWarning(UserWarning):
    """A fit fell back to a simpler model than requested."""

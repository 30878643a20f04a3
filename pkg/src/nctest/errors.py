"""Exception types shared across the package."""


class NctestError(Exception):
    """Base class for runtime failures (as opposed to invalid arguments)."""


class InfeasibleError(NctestError):
    """No point in the search box satisfies the operator constraint."""


class NoDataError(NctestError):
    """An estimator denominator is zero (no counts to work with)."""


class CannotEstimateError(NctestError):
    """Histogram background cannot be estimated (empty sideband)."""


class DegenerateSplittingError(NctestError):
    """The splitting-ratio form of the second-moment observable is singular."""


class UndefinedSignificanceError(NctestError):
    """Significance is undefined because the total uncertainty is zero."""

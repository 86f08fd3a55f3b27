"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigurationError -> 2,
NumericalFailure -> 3, StudyError -> 4.
"""


class SpclabError(Exception):
    """Base class for package errors."""


class ConfigurationError(SpclabError):
    """Invalid grid/model/schedule/config input."""


class UsageError(SpclabError):
    """Operation called with incompatible arguments (e.g. grid mismatch)."""


class ModelError(SpclabError):
    """Model family cannot realize the requested physics (e.g. no diving state)."""


class NoBoundStateError(SpclabError):
    """No sign change of the matching determinant in the requested bracket."""


class MultipleBoundStatesError(SpclabError):
    """More than one gap eigenvalue where exactly one was assumed."""


class ResolutionError(SpclabError):
    """Grid/box too small for the requested quantity (e.g. k*r_max < 4*pi)."""


class NumericalFailure(SpclabError):
    """A solver violated its accuracy contract (e.g. norm drift)."""


class WindowError(SpclabError):
    """A scan window did not contain the feature it was supposed to bracket."""


class FitQualityError(SpclabError):
    """A least-squares fit exceeded its residual budget."""


class StudyError(SpclabError):
    """A parameter study could not produce a valid result."""

"""Exception types raised across the package."""


class FlmChangeError(Exception):
    """Base class for errors raised by flmchange."""


class GridMismatchError(FlmChangeError, ValueError):
    """Functions or datasets are sampled on different grids."""


class DatasetFormatError(FlmChangeError, ValueError):
    """A dataset file or in-memory dataset is malformed."""


class ConfigurationError(FlmChangeError, ValueError):
    """Invalid parameters, e.g. a spline degree too low for the penalty order."""


class NumericalFailureError(FlmChangeError, ArithmeticError):
    """A linear system could not be solved or all GCV scores are non-finite."""


class InvalidInputError(FlmChangeError, ValueError):
    """Residuals or other numeric inputs contain NaN or are otherwise unusable."""


class MissingQuantileError(FlmChangeError, KeyError):
    """A quantile table does not cover the requested statistic or level."""


class TableFormatError(FlmChangeError, ValueError):
    """A stored quantile table is truncated, has bad magic bytes or a bad version."""


class ExperimentAbortedError(FlmChangeError, RuntimeError):
    """Too many repetitions of a simulation experiment failed to fit."""

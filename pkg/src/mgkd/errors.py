"""Exception hierarchy shared across the package."""


class MgkdError(Exception):
    """Base class for all package errors."""


class DimensionError(MgkdError):
    """Array shapes do not line up."""


class ConfigError(MgkdError):
    """A hyperparameter or config value is out of its legal range."""


class StateError(MgkdError):
    """An operation was called with inconsistent or missing state."""


class NumericError(MgkdError):
    """A computation produced or received non-finite values."""


class MetricError(MgkdError):
    """A metric cannot be computed on the given scored set."""


class ParseError(MgkdError):
    """A delimited data file failed to parse."""


class SplitError(MgkdError):
    """A chronological split left one of the partitions empty."""


class GenerationError(MgkdError):
    """Synthetic data generation could not satisfy its calibration target."""


class DataError(MgkdError):
    """A dataset is missing a feature block required by the requested run."""


class TrainingError(MgkdError):
    """Training diverged (non-finite loss)."""

"""Exception hierarchy shared across the package."""

from sklearn.exceptions import NotFittedError

__all__ = [
    "InvalidInputError",
    "ConfigError",
    "DegenerateInputError",
    "UndefinedMetricError",
    "TrainingDivergenceError",
    "UsageError",
    "FormatError",
    "NotFittedError",
]


class InvalidInputError(ValueError):
    """Array shapes or values violate an operation's preconditions."""


class ConfigError(ValueError):
    """A configuration value is out of range or unknown."""


class DegenerateInputError(ValueError):
    """Input is well-formed but numerically degenerate (e.g. zero variance)."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given masks (e.g. empty ground truth)."""


class TrainingDivergenceError(RuntimeError):
    """A loss, gradient or parameter became non-finite during training."""


class UsageError(RuntimeError):
    """An API was called in the wrong order."""


class FormatError(ValueError):
    """A file on disk does not follow the expected binary/text layout."""

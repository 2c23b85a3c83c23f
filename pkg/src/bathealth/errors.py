"""Exception hierarchy shared by all modules."""


class BatteryHealthError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(BatteryHealthError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(BatteryHealthError):
    """An input file does not follow its declared format."""


class DataError(BatteryHealthError):
    """Input data is well formed but physically inconsistent."""


class DegenerateInputError(BatteryHealthError, ValueError):
    """A statistic is undefined for the input (zero variance, constant x)."""


class InsufficientDataError(BatteryHealthError):
    """Too few usable samples remain after dropping missing values."""


class CoverageError(BatteryHealthError):
    """The data does not cover the requested interval."""


class UndefinedEntropyError(BatteryHealthError):
    """Sample entropy is undefined because a match count is zero."""


class NumericalError(BatteryHealthError):
    """A linear system is singular or too ill-conditioned to solve."""


class ConversionError(BatteryHealthError):
    """A health indicator has no SOC-referenced counterpart."""


class EvaluationError(BatteryHealthError):
    """No cell produced a usable evaluation."""


class SearchError(BatteryHealthError):
    """Every grid-search candidate was missing or degenerate."""


class ConfigError(BatteryHealthError):
    """A configuration file or object is invalid."""

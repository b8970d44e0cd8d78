"""Exception hierarchy shared across the package.

The CLI maps these onto distinct process exit codes, so new error
conditions should reuse one of the three leaf categories below.
"""


class KoclError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KoclError, ValueError):
    """Invalid configuration: bad dimensions, hyperparameters, or specs."""


class DomainError(KoclError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class NumericError(KoclError, ArithmeticError):
    """Non-finite values or a numerically invalid state were encountered."""


class DataFormatError(KoclError, ValueError):
    """A data file is malformed, truncated, or inconsistent."""

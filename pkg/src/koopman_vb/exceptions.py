"""Exception hierarchy shared by every module of the package."""


class KoopmanVBError(Exception):
    """Base class for all package errors."""


class ConfigError(KoopmanVBError, ValueError):
    """Invalid parameter or configuration value."""


class DataError(KoopmanVBError, ValueError):
    """Input data violates a Dataset invariant (e.g. non-finite cell)."""


class MalformedFileError(DataError):
    """A file could not be parsed."""


class InsufficientDataError(DataError):
    """Not enough samples for the requested operation."""


class DegenerateSignalError(DataError):
    """A signal has zero power where a positive power is required."""


class NumericError(KoopmanVBError, ArithmeticError):
    """A computation produced a non-finite or out-of-domain value."""


class DivergenceError(NumericError):
    """A simulated or predicted trajectory blew up."""

"""Exception types shared across the package."""


class IrsAltminError(Exception):
    """Base class for package errors."""


class ConfigError(IrsAltminError, ValueError):
    """Invalid configuration, dimensions or experiment description."""


class DegenerateStateError(IrsAltminError, ArithmeticError):
    """A duality transform or normalisation received an all-zero input."""


class ReportingError(IrsAltminError, KeyError):
    """A metric was requested for a cell with missing method rows."""

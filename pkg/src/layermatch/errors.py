"""Exception types shared across the package."""


class BankFormatError(Exception):
    """Raised when serialized bank or parameter data is malformed."""


class ConfigurationError(Exception):
    """Raised when a run configuration cannot be satisfied by the data."""

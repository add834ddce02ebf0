class ConfigurationError(ValueError):
    """A request that cannot be honored: bad flags, shapes, or sources."""


class BankFormatError(Exception):
    """A bank file that violates the on-disk contract."""

"""Exception types shared across the package."""


class RvicError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RvicError, ValueError):
    """Invalid or inconsistent configuration."""


class ContractViolation(RvicError, ValueError):
    """An operation was called with arguments outside its contract."""


class CheckpointError(RvicError):
    """A checkpoint could not be read, or does not match the requested run."""


class InapplicableMetric(RvicError, ValueError):
    """The metric is not defined for the given environment."""

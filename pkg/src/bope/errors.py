"""Exception hierarchy shared across the package."""


class BopeError(Exception):
    """Base class for all package-specific errors."""


class InputError(BopeError, ValueError):
    """Caller passed data with a wrong dimension, bound violation, etc."""


class ConfigError(BopeError, ValueError):
    """A run/bench configuration is invalid; message names the field."""


class NumericalError(BopeError, RuntimeError):
    """A linear-algebra step failed after all recovery attempts."""


class StateError(BopeError, RuntimeError):
    """An operation was called in a state that does not allow it."""


class TrainingError(BopeError, RuntimeError):
    """Model training produced non-finite values; message reports the epoch."""

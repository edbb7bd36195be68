"""Exception hierarchy. The CLI maps each class to a distinct exit code."""


class SlayError(Exception):
    exit_code = 1


class TensorFormatError(SlayError):
    """Malformed or unreadable tensor file."""

    exit_code = 2


class ConfigError(SlayError, ValueError):
    """Invalid configuration value or schema violation."""

    exit_code = 3


class NumericError(SlayError, ValueError):
    """Input violates a numerical precondition (non-finite, off-sphere, ...)."""

    exit_code = 4

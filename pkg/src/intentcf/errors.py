"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown configuration key."""


class ParseError(ValueError):
    """Malformed input line; message carries file path and line number."""


class ShapeError(ValueError):
    """Array dimensions incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """Non-finite value produced where a finite one is required."""


class DataError(RuntimeError):
    """Dataset became unusable (e.g. empty after filtering)."""


class EvalError(RuntimeError):
    """Evaluation phase has no users with ground truth."""


class CheckpointError(RuntimeError):
    """Checkpoint file corrupt, truncated, or of an unsupported version."""

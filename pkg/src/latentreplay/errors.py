"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor extents incompatible with the requested operation."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class StateError(RuntimeError):
    """Operation called in a state that does not support it."""


class TensorFormatError(ValueError):
    """Malformed tensor file (bad magic, truncated payload, ...)."""

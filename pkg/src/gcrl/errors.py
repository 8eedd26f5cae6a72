"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match the expected network or batch layout."""


class NumericError(ValueError):
    """A value that must be finite is NaN or infinite."""


class StateOnlyDemoError(ValueError):
    """An action-requiring consumer was fed state-only demonstrations."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or inconsistent."""

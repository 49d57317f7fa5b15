"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a config file, matrix lookup, or topology reference is inconsistent."""


class UndefinedMetricError(ValueError):
    """Raised when a rate is requested over an empty denominator."""

"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid parameters or experiment configuration."""


class InputError(ValueError):
    """Malformed input data, e.g. a feature vector of the wrong dimension."""

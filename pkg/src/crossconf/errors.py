"""Exception types shared across the package."""


class InvalidConfigurationError(ValueError):
    """Parameters are structurally impossible (bad fold count, missing draws, ...)."""


class InvalidDataError(ValueError):
    """Input data cannot be used (non-numeric column, NaN entry, shape mismatch)."""


class NumericalError(RuntimeError):
    """A numeric routine failed irrecoverably."""

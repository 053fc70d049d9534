"""Exception types shared across the package."""


class LimnetError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LimnetError):
    """Tensor shapes disagree with the declared dimensions."""


class NumericalError(LimnetError):
    """A computation produced or received non-finite values."""


class FormatError(LimnetError):
    """A serialized file violates its format contract."""


class ConfigError(LimnetError):
    """Invalid configuration or label data."""


class TrainingDiverged(LimnetError):
    """Training hit a non-finite loss."""

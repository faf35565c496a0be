"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Invalid configuration or dataset specification."""


class SplitError(ValueError):
    """A cross-validation split cannot be formed."""


class GraphError(RuntimeError):
    """Misuse of a computation graph (e.g. double backward)."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during training."""

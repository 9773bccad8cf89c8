"""Exception hierarchy shared by every awfnet module."""


class AWFError(Exception):
    """Base class for all library errors."""


class DimensionError(AWFError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message} (shapes: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message)
        self.shapes = shapes


class GeometryError(AWFError, ValueError):
    """Spatial geometry is invalid for the requested operation."""


class ConfigError(AWFError, ValueError):
    pass


class LabelError(AWFError, ValueError):
    pass


class ContractError(AWFError, ValueError):
    """A documented precondition was violated by the caller."""


class InsufficientStatisticsError(AWFError, ValueError):
    pass


class DeterminismError(AWFError, RuntimeError):
    pass


class UndefinedMetricError(AWFError, ValueError):
    pass


class DatasetError(AWFError, ValueError):
    pass


class CorruptCheckpointError(AWFError, IOError):
    pass


class IncompatibleCheckpointError(AWFError, ValueError):
    pass


class DivergenceError(AWFError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message, op_name=None):
        super().__init__(message)
        self.op_name = op_name

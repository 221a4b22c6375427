"""
Exception hierarchy shared by every edge_sentinel module
"""


class EdgeSentinelError(Exception):
    """Root of all edge_sentinel errors"""


class DimensionError(EdgeSentinelError, ValueError):
    """Operands or records have incompatible shapes"""


class ParameterError(EdgeSentinelError, ValueError):
    """A parameter or configuration value violates its precondition"""


class UndefinedInputError(EdgeSentinelError, ValueError):
    """An operation received an empty input it cannot be defined on"""


class NotInitializedError(EdgeSentinelError, RuntimeError):
    """A stateful estimator was used before its calibration step"""


class SchedulerError(EdgeSentinelError, RuntimeError):
    """A scheduling policy returned a decision the simulator cannot execute"""


class DatasetError(EdgeSentinelError, IOError):
    """Dataset, episode log or checkpoint files are missing or corrupted"""


class TrainingError(EdgeSentinelError, RuntimeError):
    """Training produced a non-finite loss"""

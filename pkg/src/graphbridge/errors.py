"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific type that applies.
"""


class GraphBridgeError(Exception):
    """Base class for all package errors."""


class ConfigError(GraphBridgeError):
    """Invalid or inconsistent configuration."""


class DataFormatError(GraphBridgeError):
    """Malformed input file or record."""


class PreconditionError(GraphBridgeError):
    """An operation was called with inputs violating its contract."""


class NumericError(GraphBridgeError):
    """NaN/Inf detected, or a numeric routine failed."""


class GenerationError(GraphBridgeError):
    """A synthetic-data generator exhausted its retry budget."""


class TrainingDiverged(NumericError):
    """Loss became non-finite during training.

    Carries the last finite-loss parameter snapshot so callers can recover.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good

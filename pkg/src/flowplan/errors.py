"""Exception types shared across the package."""


class FlowPlanError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FlowPlanError, ValueError):
    """Caller passed arguments that violate an operation's contract."""


class ShapeError(InvalidInputError):
    """Array shapes are incompatible; the message names both shapes."""


class ConfigError(InvalidInputError):
    """Configuration values are inconsistent or unsupported."""


class EmptyInputError(InvalidInputError):
    """An operation that needs at least one valid element got none."""


class NumericalError(FlowPlanError, ArithmeticError):
    """A numerical routine diverged or produced non-finite values."""


class GenerationError(FlowPlanError):
    """Procedural world generation exhausted its retry budget."""


class OracleError(FlowPlanError):
    """The synthetic expert failed to produce any usable trajectory."""


class TrainingError(FlowPlanError):
    """Training aborted (non-finite gradients or loss)."""


class DatasetError(FlowPlanError):
    """Dataset file could not be read or written."""


class ParseError(DatasetError):
    """Malformed dataset line; the message carries the 1-based line number."""


class VersionError(DatasetError):
    """Dataset or checkpoint format version mismatch."""


class CheckpointError(FlowPlanError):
    """Checkpoint file is malformed or incompatible with the configuration."""

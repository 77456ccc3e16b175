"""Exception types shared across the toolkit."""


class TicktackError(Exception):
    """Base class for all toolkit errors."""


class YearZeroError(TicktackError):
    """Year zero does not exist in the proleptic calendar."""


class YearOutOfRangeError(TicktackError):
    """Year falls outside the supported range."""


class InvalidRangeError(TicktackError):
    """Interval bounds are reversed or empty where they must not be."""


class TokenizationError(TicktackError):
    """Text cannot be encoded with the given vocabulary."""


class EmptyHistogramError(TicktackError):
    """Uniformity metrics require at least one counted mention."""


class DimensionMismatchError(TicktackError):
    """Tensor shapes disagree with the model or encoding dimensions."""


class SequenceTooLongError(TicktackError):
    """Token sequence exceeds the model's maximum length."""


class EmptySequenceError(TicktackError):
    """Operation requires a nonempty sequence."""


class ZeroVectorError(TicktackError):
    """Cosine similarity is undefined for zero-norm vectors."""


class EmptyPartitionError(TicktackError):
    """Class partition contains no vectors at all."""


class DegeneratePartitionError(TicktackError):
    """Clustering metrics need at least two populated classes."""


class NonFiniteLossError(TicktackError):
    """A loss evaluated to NaN or infinity."""


class InsufficientDataError(TicktackError):
    """Not enough sequences to satisfy the requested sample count."""


class ShapeMismatchError(TicktackError):
    """Parameter-shaped containers do not line up elementwise."""


class ConfigError(TicktackError):
    """Invalid configuration value or file."""

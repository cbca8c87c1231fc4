"""Exception hierarchy shared across the engine."""


class SeqAttribError(Exception):
    """Base class for all engine errors."""


class DimensionError(SeqAttribError):
    """A vector or matrix does not match the instance's dimensions."""


class ProtocolError(SeqAttribError):
    """The bridge sent a message that violates the wire protocol."""


class TransportError(SeqAttribError):
    """The bridge process or endpoint is unreachable or timed out."""


class DataError(SeqAttribError):
    """The bridge returned numerically invalid data (NaN, positive logprob,
    non-stochastic attention row)."""


class CapabilityError(SeqAttribError):
    """The requested operation is not supported by the bridge or exceeds a
    configured limit (e.g. exact Shapley beyond the feature cutoff)."""


class ConditioningError(SeqAttribError):
    """A regression system is rank deficient or numerically singular."""


class VocabularyError(SeqAttribError):
    """An output symbol is not in the toy model's vocabulary."""


class EvaluationError(SeqAttribError):
    """A corpus evaluation could not produce any result."""

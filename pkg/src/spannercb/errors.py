"""Exception types shared across the package."""


class SpannerCBError(Exception):
    """Base class for all errors raised by this package."""


class SingularStateError(SpannerCBError):
    """A cached determinant/inverse state is (numerically) singular."""


class SingularUpdateError(SpannerCBError):
    """A rank-one column replacement would make the matrix singular."""


class RankDeficiencyError(SpannerCBError):
    """Embeddings or a design do not span the ambient space."""


class NonTerminationError(SpannerCBError):
    """An iterative procedure exceeded its iteration guard."""


class ConfigurationError(SpannerCBError):
    """Invalid or pathological parameters."""


class NumericalError(SpannerCBError):
    """A root finder or solver failed to reach its tolerance."""


class InvariantViolation(SpannerCBError):
    """An internal invariant was found broken at runtime."""


class EmbeddingFormatError(SpannerCBError):
    """An embedding file is malformed or contains an invalid row."""


class EnvSpecError(SpannerCBError):
    """An environment specification cannot be realised."""

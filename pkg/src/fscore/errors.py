"""Exception types shared across the package."""


class FScoreError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(FScoreError, ValueError):
    pass


class ZeroDirection(FScoreError, ValueError):
    pass


class DimensionMismatch(FScoreError, ValueError):
    pass


class DimensionTooHigh(FScoreError, ValueError):
    pass


class DegenerateOutput(FScoreError, ValueError):
    pass


class InvalidAlpha(FScoreError, ValueError):
    pass


class NonFiniteEstimate(FScoreError, ArithmeticError):
    pass


class UnresolvedQuadrature(FScoreError, ArithmeticError):
    """The quadrature grid does not carry the mass of a density it integrates."""


class DivergingObjective(FScoreError, RuntimeError):
    pass


class ConfigError(FScoreError, ValueError):
    """Bad experiment configuration; the message names the offending key."""


class MissingColumn(FScoreError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing column"

"""Exception types shared across the package."""


class IpagError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(IpagError):
    """Vector/matrix dimensions of problem parts do not agree."""


class SlaterViolation(IpagError):
    """The provided interior point is not strictly feasible."""


class InvalidAlpha(IpagError):
    """A momentum weight lies outside (0, 1]."""


class InvalidHorizon(IpagError):
    """Iteration horizon is too small to run the solver."""


class DegenerateWeights(IpagError):
    """Output-sampling weights are not all positive."""


class BudgetZero(IpagError):
    """An inner solve was requested with a non-positive iteration budget."""


class UnboundedDual(IpagError):
    """Inner dual iterate hit its hard cap; Slater point or scaling is bad."""


class UnsupportedSet(IpagError):
    """No analytic projection is available for the requested set."""


class CertificateUnavailable(IpagError):
    """No subgradient certificate exists within the claimed accuracy."""


class DimensionTooLarge(IpagError):
    """Grid-search oracle requested above its dimension limit."""


class NonFiniteIterate(IpagError):
    """A solver iterate contains NaN or Inf."""


class OddDimension(IpagError):
    """Instance generator requires an even primal dimension."""


class ParseError(IpagError):
    """Experiment configuration text could not be parsed."""


class ValidationError(IpagError):
    """Experiment configuration parsed but failed validation."""

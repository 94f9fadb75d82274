"""Exception types shared across the package."""


class MetrodiffError(Exception):
    """Base class for all library errors."""


class EvalOutsideSupport(MetrodiffError):
    """A model or coefficient function was evaluated where it is undefined."""


class NonpositiveDiffusion(MetrodiffError):
    """D(x) <= 0 was observed at a point inside the declared support."""


class GradientUnavailable(MetrodiffError):
    """Coefficients requested for a model that forbids finite differences."""


class NonIntegerStepCount(MetrodiffError):
    """The horizon T is not an integer multiple of the step length h."""


class MismatchedHorizon(MetrodiffError):
    """Self-difference errors require ensembles run to the same time T."""


class UnsortedEdges(MetrodiffError):
    """Histogram bin edges must be strictly increasing."""


class NonpositiveError(MetrodiffError):
    """Fewer than three usable rows remain after excluding noise-level errors."""


class QuadratureNonConvergence(MetrodiffError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class SupportViolation(MetrodiffError):
    """Relative entropy is undefined: p > 0 on a bin where q = 0."""


class NonpositiveDt(MetrodiffError):
    """Time step for the density solver must be positive."""


class SingularSolve(MetrodiffError):
    """Tridiagonal solve failed (cannot occur for positive diffusivity)."""


class NonpositiveEquilibrium(MetrodiffError):
    """Entropy diagnostics need a strictly positive equilibrium density."""


class ConfigError(MetrodiffError):
    """Experiment configuration failed to parse or validate."""


class ExpressionError(ConfigError):
    """An expression string failed to parse or used a forbidden construct."""

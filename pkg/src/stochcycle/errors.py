"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to branch on gets its own class;
the CLI maps the three broad families onto exit codes (config 2, numerical 3,
check failures 1).
"""


class StochcycleError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(StochcycleError):
    """Malformed, incomplete, or unknown configuration input."""


class NumericalFailure(StochcycleError):
    """A numerical procedure failed to produce a trustworthy result."""


class CheckFailure(StochcycleError):
    """A requested validation check ran to completion and failed."""


# --- model construction / validation ---

class UnknownModel(ConfigError):
    pass


class MissingParam(ConfigError):
    pass


class NonSymmetricDiffusion(ConfigError):
    pass


class NegativeDiffusionEigenvalue(ConfigError):
    pass


# --- deterministic flow ---

class IntegrationFailure(NumericalFailure):
    pass


class StepSizeUnderflow(IntegrationFailure):
    pass


class NonFiniteState(IntegrationFailure):
    pass


class NoSectionCrossing(NumericalFailure):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class DegeneratePeriod(NumericalFailure):
    """The attractor reached from the guess is a fixed point, not a cycle."""


class ClosureFailure(NumericalFailure):
    pass


# --- Gaussian tube propagation ---

class NonPSDInitial(ConfigError):
    pass


class SingularCovariance(NumericalFailure):
    pass


class NotLinearModel(ConfigError):
    pass


# --- cycle curvature / prefactor / flux ---

class ZeroVelocity(NumericalFailure):
    pass


class FrameDiscontinuity(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class LostPositivity(NumericalFailure):
    pass


class AmbiguousNullspace(NumericalFailure):
    pass


class TooFarFromCycle(NumericalFailure):
    pass


# --- Laplace asymptotics ---

class NonPDHessian(NumericalFailure):
    pass


class NotCriticalPoint(NumericalFailure):
    pass


class NonPositiveWeight(NumericalFailure):
    pass


class NotOneDimensional(ConfigError):
    pass


class BoxTooSmall(NumericalFailure):
    pass


# --- Monte Carlo ---

class FactorizationFailure(NumericalFailure):
    pass


class GridMismatch(ConfigError):
    pass


class InsufficientSamplesPerBin(NumericalFailure):
    pass


# --- scaling maps ---

class NonPositiveScale(ConfigError):
    pass


class OutOfRange(ConfigError):
    pass

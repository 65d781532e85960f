"""Exception and warning types shared across the simulator."""


class FbsimError(Exception):
    """Base class for all simulator errors."""


class InfeasibleConfig(FbsimError):
    """A device configuration cannot realize the requested bin layout."""


class RegimeViolation(FbsimError):
    """A physical approximation regime (e.g. quasi-CW pumping) is violated."""


class DimensionMismatch(FbsimError):
    """State, projector, or matrix dimensions are incompatible."""


class NoOverlap(FbsimError):
    """The selected frequency matches no modulation sideband."""


class ResolutionTooCoarse(FbsimError):
    """A numerical quadrature failed its internal error estimate."""


class FitDiverged(FbsimError):
    """A least-squares fit ended with an unacceptable residual."""


class NonAdjacentPair(FbsimError):
    """Bell interference requires spectrally adjacent frequency bins."""


class NumericalFailure(FbsimError):
    """A numerical linear-algebra routine returned an unreliable result."""


class ConfigError(FbsimError):
    """A configuration file is missing, unparseable, or ill-typed."""


class ScenarioError(FbsimError):
    """A requested experiment cannot run with the given configuration."""


class DoublePairRisk(UserWarning):
    """Pair probability per coincidence window is too high for the
    single-pair state model to be trustworthy."""

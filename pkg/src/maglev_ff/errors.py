"""Exception types raised across the package."""


class MaglevError(Exception):
    """Base class for all package errors."""


class SingularMass(MaglevError):
    """The mass matrix failed its positive-definiteness check."""


class AffinityViolation(MaglevError):
    """A scheduling strategy cannot express a matrix affinely."""


class RankDeficientInput(MaglevError):
    """A pseudo-inverse was requested for a numerically rank-deficient matrix."""


class RelativeDegreeViolation(MaglevError):
    """The input appears in an output derivative below the assumed relative degree."""


class ShapeMismatch(MaglevError, ValueError):
    """Matrix arguments have incompatible shapes."""


class NoFeasibleEpsilon(MaglevError):
    """No Lyapunov cross-term weight makes both block matrices definite."""


class EmptyRecord(MaglevError, ValueError):
    """Metrics were requested for a record without samples."""


class ConfigError(MaglevError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class SimulationError(MaglevError, RuntimeError):
    """A simulation run failed."""

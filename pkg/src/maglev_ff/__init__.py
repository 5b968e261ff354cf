"""Feedforward comparison toolkit for a six-degree-of-freedom levitated plate."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AffinityViolation,
    ConfigError,
    EmptyRecord,
    MaglevError,
    NoFeasibleEpsilon,
    RankDeficientInput,
    RelativeDegreeViolation,
    ShapeMismatch,
    SimulationError,
    SingularMass,
)
from .params import COORDS, GeneralizedState, PlantParams  # noqa: F401
from .dynamics import (  # noqa: F401
    christoffel,
    coriolis_matrix,
    forward_dynamics,
    is_mass_pd,
    mass_matrix,
    mass_matrix_rate,
)
from .methods import ALL_METHODS, COMPARISON_METHODS, make_method  # noqa: F401
from .sim import SimConfig, SimulationRecord, error_metrics, run_closed_loop, run_open_loop  # noqa: F401
from .trajectory import DisturbanceProfile, MotionProfile, default_profile, sample_reference  # noqa: F401

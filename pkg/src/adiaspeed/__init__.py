"""Constant-speed adiabatic schedules: eigenstate-path geometry, time evolution,
projector backends and the segmented schedule builder."""

from .errors import (
    AdiaspeedError,
    AmbiguityError,
    BuildAborted,
    ConfigurationError,
    DegeneracyError,
    ParseError,
    RefineGridError,
    SearchError,
    ValidationError,
)
from .evolution import EvolutionConfig, evolve, final_fidelity, min_time_for_fidelity
from .hamiltonians import InterpolatedHamiltonian, grover_effective, grover_full, landau_zener
from .operators import HermitianOperator, SpectralDecomposition, eig
from .projector import ExactBackend, GaussianBackend, GaussianMCBackend, apply_projector
from .scheduler import BuilderConfig, SchedulePoints, build_constant_speed
from .schedules import grover_optimal, interpolate_monotone, linear

__version__ = "0.1.0"

"""Simulation and limit-theorem checks for the one-dimensional directed trap model."""

from .errors import (
    DataInsufficientError,
    GridError,
    HorizonTooSmallError,
    ParameterDomainError,
    PartialResultError,
    PathExhaustedError,
    RunawaySimulationError,
    TrajectoryExhaustedError,
    TraplabError,
)
from .model import (
    PARETO,
    ConstantLaw,
    DeepTrapIndex,
    Environment,
    ModelParams,
    ParetoLaw,
    TailEquivalentLaw,
    critical_depth,
    d_event,
    deep_probability,
    index_deep_traps,
    make_params,
    nu_scale,
    rho_scale,
    sample_depth,
)
from .walk import (
    OccupationRecord,
    Trajectory,
    check_detailed_balance,
    expected_visits,
    hitting_probability_psi,
    max_backtrack,
    occupation_times,
    position_at_time,
    reversible_measure,
    simulate_to_site,
    simulate_to_time,
)

__version__ = "0.1.0"

from .core import (
    ARRIVAL_THRESHOLD,
    DEFAULT_DT,
    AgentState,
    Kind,
    SimulationError,
    WorldState,
    min_clearance,
    neighbors_of,
    orca_velocity,
    preferred_velocity,
    step,
)
from .scenarios import (
    Scenario,
    ScenarioKind,
    Termination,
    TrajectorySet,
    build_scenario,
    final_world,
    run_scenario,
)

__all__ = [
    "ARRIVAL_THRESHOLD",
    "DEFAULT_DT",
    "AgentState",
    "Kind",
    "Scenario",
    "ScenarioKind",
    "SimulationError",
    "Termination",
    "TrajectorySet",
    "WorldState",
    "build_scenario",
    "final_world",
    "min_clearance",
    "neighbors_of",
    "orca_velocity",
    "preferred_velocity",
    "run_scenario",
    "step",
]

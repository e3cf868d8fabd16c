"""Distributed optimal-transport task allocation for agent swarms.

The solver assigns agents to waypoints by consensus ADMM, keeps the plan
warm across network events, and drives a small event-driven flight
simulator for comparing against a greedy baseline.
"""

from .admm import AdmmConfig, AdmmState, ConvergenceReport, project_capped_simplex, run_until_converged
from .core import Assignment, Bounds, Mode, NetworkTopology, UtilityParams, aggregate_utility, brute_force_optimal
from .dynamic import (
    AgentDropout,
    DynamicState,
    ParamUpdate,
    WaypointReached,
    apply_event,
    dynamic_loop,
    extract_assignment,
)
from .sim import Allocator, MissionConfig, Scenario, load_scenario, run_mission

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AgentDropout",
    "Allocator",
    "Assignment",
    "Bounds",
    "ConvergenceReport",
    "DynamicState",
    "MissionConfig",
    "Mode",
    "NetworkTopology",
    "ParamUpdate",
    "Scenario",
    "UtilityParams",
    "WaypointReached",
    "aggregate_utility",
    "apply_event",
    "brute_force_optimal",
    "dynamic_loop",
    "extract_assignment",
    "load_scenario",
    "project_capped_simplex",
    "run_mission",
    "run_until_converged",
]

"""Reproducible experiment drivers shared by the CLI and the acceptance tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig
from .casestudy import case_study
from .core import Assignment, aggregate_utility, brute_force_optimal
from .dynamic import DynamicState, ParamUpdate, WaypointReached, dynamic_loop
from .sim import Allocator, MissionConfig, MissionReport, Scenario, random_scenario, run_mission


@dataclass(frozen=True)
class EpochResult:
    epoch: int
    iterations: int
    primal_residual: float
    drift: float
    utility: float
    optimum: float
    assignment: Assignment
    active_waypoints: int


def replay_update_protocol(
    update_every: int = 250,
    seed: int = 0,
    eta: float = 10.0,
    epsilon: float = 1e-6,
    low: int = 1,
    high: int = 10,
) -> list[EpochResult]:
    """Case-study run with a network/parameter update every ``update_every`` iterations.

    At each update one agent (round robin) reaches its current waypoint, the
    waypoint leaves the network, and every surviving gamma and delta is
    redrawn uniformly from the integers ``low..high``. Updates stop when one
    more visit would leave fewer waypoints than agents. Each epoch must
    re-converge inside its window, otherwise :class:`MaxIterationsExceeded`
    propagates from the loop.
    """
    rng = np.random.default_rng(seed)
    topology, params, bounds = case_study()
    state = DynamicState.start(topology, params, bounds, eta=eta)
    order = itertools.cycle(sorted(topology.active_agents))
    snapshots: dict[int, tuple] = {}

    def source(st: DynamicState):
        k = st.admm.iteration
        if st.epoch > 0 and st.epoch - 1 not in snapshots:
            snapshots[st.epoch - 1] = (st.topology, st.params)
        if k == 0 or k % update_every:
            return []
        if len(st.topology.active_waypoints) - 1 < len(st.topology.active_agents):
            return None
        agent = next(order)
        target = st.current[agent]
        survivors = st.topology.without_waypoint(target)
        edges = tuple(sorted(survivors.active_edges))
        gamma = rng.integers(low, high + 1, size=len(edges)).astype(float)
        delta = rng.integers(low, high + 1, size=len(edges)).astype(float)
        return [WaypointReached(agent, target, 0), ParamUpdate(edges, tuple(gamma), tuple(delta))]

    final, records = dynamic_loop(state, source, AdmmConfig(eta, epsilon, update_every))
    snapshots.setdefault(final.epoch - 1, (final.topology, final.params))

    results = []
    for rec in records:
        topo, prm = snapshots[rec.epoch]
        _, optimum = brute_force_optimal(topo, prm)
        results.append(
            EpochResult(
                epoch=rec.epoch,
                iterations=rec.report.iterations,
                primal_residual=rec.report.primal_residual,
                drift=rec.report.drift,
                utility=aggregate_utility(rec.assignment, prm),
                optimum=optimum,
                assignment=rec.assignment,
                active_waypoints=len(topo.active_waypoints),
            )
        )
    return results


@dataclass(frozen=True)
class ComparisonRow:
    seed: int
    greedy_total: float
    ot_total: float
    greedy_complete: bool
    ot_complete: bool

    @property
    def ot_wins(self) -> bool:
        return self.ot_total <= self.greedy_total


def visits_each_once(report: MissionReport, scenario: Scenario) -> bool:
    visited = [y for _, y, _ in report.visit_order]
    return sorted(visited) == list(range(len(scenario.waypoints)))


def compare(scenario: Scenario, config: MissionConfig = MissionConfig()) -> dict[Allocator, MissionReport]:
    return {alloc: run_mission(scenario, alloc, config) for alloc in (Allocator.GREEDY, Allocator.DYNAMIC_OT)}


def random_comparison(
    count: int, seed: int = 0, config: MissionConfig = MissionConfig(), **scenario_kwargs
) -> list[ComparisonRow]:
    """Both allocators on scenarios ``random_scenario(seed + i)`` for ``i < count``."""
    rows = []
    for i in range(count):
        scenario = random_scenario(seed + i, **scenario_kwargs)
        reports = compare(scenario, config)
        greedy, ot = reports[Allocator.GREEDY], reports[Allocator.DYNAMIC_OT]
        rows.append(
            ComparisonRow(
                seed + i,
                greedy.total_distance,
                ot.total_distance,
                visits_each_once(greedy, scenario),
                visits_each_once(ot, scenario),
            )
        )
    return rows

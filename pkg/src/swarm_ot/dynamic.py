"""Event-driven re-optimisation on top of the ADMM solver.

The solver never restarts. Between iterations, events edit the network
(a waypoint is visited, an agent drops out, coefficients change) and the
surviving plan and dual entries carry over as a warm start. Every time the
iterate converges the current assignment is extracted and logged as one
epoch.
"""

from __future__ import annotations

import dataclasses
import queue
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .admm import (
    AdmmConfig,
    AdmmState,
    ConvergenceReport,
    admm_step,
    check_problem,
    initial_state,
    is_converged,
    plan_utility,
)
from .core import Assignment, Bounds, NetworkTopology, UtilityParams, validate_params
from .errors import EventMismatch, Infeasible, MaxIterationsExceeded, NotConverged, RevisitAttempt, UnknownEntity

#: Plan entries at or below this are treated as outside the plan's support.
SUPPORT_TOL = 1e-4


@dataclass(frozen=True)
class WaypointReached:
    agent: int
    waypoint: int
    reading: int = 0


@dataclass(frozen=True)
class AgentDropout:
    agent: int


@dataclass(frozen=True)
class ParamUpdate:
    """Overwrite coefficients on ``edges``. ``gamma``/``delta`` are per-edge values or None."""

    edges: tuple[tuple[int, int], ...]
    gamma: tuple[float, ...] | None = None
    delta: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(x), int(y)) for x, y in self.edges))
        for name in ("gamma", "delta"):
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(float(v) for v in np.broadcast_to(np.asarray(values, dtype=float), (len(self.edges),)))
            object.__setattr__(self, name, values)


SwarmEvent = Union[WaypointReached, AgentDropout, ParamUpdate]

#: Builds post-visit parameters from (params, topology after the visit, event).
DeltaRule = Callable[[UtilityParams, NetworkTopology, WaypointReached], UtilityParams]


class Visit(NamedTuple):
    epoch: int
    agent: int
    waypoint: int
    reading: int


class EpochRecord(NamedTuple):
    epoch: int
    assignment: Assignment
    report: ConvergenceReport


@dataclass(frozen=True, eq=False)
class DynamicState:
    epoch: int
    admm: AdmmState
    topology: NetworkTopology
    params: UtilityParams
    bounds: Bounds
    visited: frozenset[int] = frozenset()
    assignment_log: tuple[tuple[int, Assignment], ...] = ()
    visits: tuple[Visit, ...] = ()
    current: Assignment | None = None

    @classmethod
    def start(
        cls,
        topology: NetworkTopology,
        params: UtilityParams,
        bounds: Bounds | None = None,
        eta: float = 10.0,
        current: Assignment | None = None,
    ) -> DynamicState:
        bounds = bounds if bounds is not None else Bounds.matching(*topology.shape)
        check_problem(topology, params, bounds)
        return cls(0, initial_state(topology, eta), topology, params, bounds, current=current)

    def replace(self, **changes) -> DynamicState:
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# extraction


def check_convergence(state: AdmmState, epsilon: float) -> bool:
    """True iff primal residual and iterate drift are both strictly below ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return is_converged(state, epsilon)


def _greedy(pi: np.ndarray, topology: NetworkTopology) -> dict[int, int]:
    # higher pi keeps a contested waypoint; an agent's own ties go to the lowest waypoint id
    order = sorted(topology.active_edges, key=lambda e: (-pi[e], e[0], e[1]))
    pairs: dict[int, int] = {}
    taken: set[int] = set()
    for x, y in order:
        if x in pairs or y in taken:
            continue
        pairs[x] = y
        taken.add(y)
    return pairs


def _support_matching(pi: np.ndarray, topology: NetworkTopology) -> dict[int, int]:
    """Matching inside the support of a fractional plan.

    The plan (rows sum to 1, columns to at most 1) is padded with dummy rows
    to a doubly stochastic square matrix. A perfect matching on its support
    exists, and restricted to the real rows it uses only plan-support edges
    and covers every saturated column, i.e. it is one of the vertices the
    fractional optimum mixes.
    """
    agents = sorted(topology.active_agents)
    waypoints = sorted(topology.active_waypoints)
    sub = pi[np.ix_(agents, waypoints)]
    edge = topology.mask[np.ix_(agents, waypoints)]
    n, m = sub.shape
    aug = np.zeros((m, m))
    aug[:n] = sub
    if m > n:
        aug[n:] = np.clip(1.0 - sub.sum(axis=0), 0.0, None) / (m - n)
    allowed = np.ones((m, m), dtype=bool)
    allowed[:n] = edge
    cost = np.where(aug > SUPPORT_TOL, -aug, 1e3)
    cost = np.where(allowed, cost, 1e6)
    rows, cols = linear_sum_assignment(cost)
    pairs = {agents[r]: waypoints[c] for r, c in zip(rows, cols) if r < n}
    if any(not allowed[r, c] for r, c in zip(rows, cols) if r < n):
        raise Infeasible("no injective assignment over active edges")
    return pairs


def _on_support(pairs: dict[int, int], pi: np.ndarray, topology: NetworkTopology) -> bool:
    if len(pairs) != len(topology.active_agents):
        return False
    if any(pi[x, y] <= SUPPORT_TOL for x, y in pairs.items()):
        return False
    saturated = {y for y in topology.active_waypoints if pi[:, y].sum() >= 1.0 - SUPPORT_TOL}
    return saturated <= set(pairs.values())


def extract_assignment(state: AdmmState, topology: NetworkTopology, epsilon: float = 1e-6) -> Assignment:
    """Read an injective agent -> waypoint map off a converged plan.

    Each agent takes its highest-``pi`` waypoint (lowest id on ties). When
    two agents want the same waypoint the one with the larger ``pi`` keeps
    it and the other moves to its next best unclaimed waypoint.

    If the plan is fractional (several optimal matchings tie) that rule can
    land on an edge outside the plan or skip a saturated waypoint; the
    result then comes from :func:`_support_matching` instead.
    """
    if not state.primal_residual < epsilon:
        raise NotConverged(f"primal residual {state.primal_residual:.3g} is not below {epsilon:g}")
    if len(topology.active_agents) > len(topology.active_waypoints):
        raise Infeasible("more active agents than active waypoints")
    if not topology.active_agents:
        return Assignment({})
    pi = state.pi
    pairs = _greedy(pi, topology)
    if not _on_support(pairs, pi, topology):
        repaired = _support_matching(pi, topology)
        if _on_support(repaired, pi, topology) or len(pairs) < len(topology.active_agents):
            pairs = repaired
    if len(pairs) < len(topology.active_agents):
        raise Infeasible("conflict resolution ran out of waypoints")
    return Assignment(pairs)


# --------------------------------------------------------------------------
# events


def _drop(admm: AdmmState, support: np.ndarray) -> AdmmState:
    keep = support
    return admm.replace(
        pi=np.where(keep, admm.pi, 0.0),
        pi_d=np.where(keep, admm.pi_d, 0.0),
        pi_s=np.where(keep, admm.pi_s, 0.0),
        alpha=np.where(keep, admm.alpha, 0.0),
        support=support,
        drift=float("inf"),
    )


def _without_agent(current: Assignment | None, agent: int) -> Assignment | None:
    if current is None:
        return None
    return Assignment({x: y for x, y in current.items() if x != agent})


def apply_event(state: DynamicState, event: SwarmEvent, delta_rule: DeltaRule | None = None) -> DynamicState:
    """Apply one event between iterations, keeping surviving variables as a warm start."""
    topo = state.topology
    if isinstance(event, WaypointReached):
        x, y = event.agent, event.waypoint
        if y in state.visited:
            raise RevisitAttempt(f"waypoint {y} was already visited")
        if y not in topo.active_waypoints:
            raise UnknownEntity(f"waypoint {y} is not active")
        if x not in topo.active_agents:
            raise UnknownEntity(f"agent {x} is not active")
        if state.current is not None and state.current.pairs.get(x) != y:
            raise EventMismatch(f"agent {x} is not assigned to waypoint {y}")
        new_topo = topo.without_waypoint(y)
        params = state.params
        if delta_rule is not None:
            params = delta_rule(params, new_topo, event)
            validate_params(new_topo, params)
        return state.replace(
            topology=new_topo,
            params=params,
            admm=_drop(state.admm, new_topo.mask),
            visited=state.visited | {y},
            visits=state.visits + (Visit(state.epoch, x, y, int(event.reading)),),
            current=_without_agent(state.current, x),
        )
    if isinstance(event, AgentDropout):
        if event.agent not in topo.active_agents:
            raise UnknownEntity(f"agent {event.agent} is not active")
        new_topo = topo.without_agent(event.agent)
        return state.replace(
            topology=new_topo,
            admm=_drop(state.admm, new_topo.mask),
            current=_without_agent(state.current, event.agent),
        )
    if isinstance(event, ParamUpdate):
        for e in event.edges:
            if e not in topo.active_edges:
                raise UnknownEntity(f"edge {e} is not active")
        gamma = np.array(state.params.gamma)
        delta = np.array(state.params.delta)
        if event.edges:
            xs, ys = map(list, zip(*event.edges))
            if event.gamma is not None:
                gamma[xs, ys] = event.gamma
            if event.delta is not None:
                delta[xs, ys] = event.delta
        params = UtilityParams(gamma, delta)
        validate_params(topo, params)
        return state.replace(params=params, admm=state.admm.replace(drift=float("inf")))
    raise TypeError(f"not a swarm event: {event!r}")


# --------------------------------------------------------------------------
# event sources

EventSource = Callable[[DynamicState], "Sequence[SwarmEvent] | None"]


def schedule(events: Mapping[int, Sequence[SwarmEvent]]) -> EventSource:
    """Source that emits ``events[k]`` once ``k`` iterations have run.

    Returns None (exhausted) after the last scheduled batch.
    """
    pending = dict(sorted(events.items()))

    def source(state: DynamicState):
        if not pending:
            return None
        k = state.admm.iteration
        due = [it for it in pending if it <= k]
        out: list[SwarmEvent] = []
        for it in due:
            out.extend(pending.pop(it))
        return out

    return source


def queue_source(q: queue.Queue, sentinel=None) -> EventSource:
    """Drain events posted to ``q`` by another thread; ``sentinel`` closes the source."""
    closed = False

    def source(state: DynamicState):
        nonlocal closed
        if closed:
            return None
        out = []
        while True:
            try:
                item = q.get_nowait()
            except queue.Empty:
                return out
            if item is sentinel:
                closed = True
                return out
            out.append(item)

    return source


# --------------------------------------------------------------------------
# main loop


def dynamic_loop(
    initial: DynamicState,
    event_source: EventSource | None = None,
    config: AdmmConfig = AdmmConfig(max_iterations=500),
    delta_rule: DeltaRule | None = None,
) -> tuple[DynamicState, list[EpochRecord]]:
    """Iterate forever-ish, applying events and logging one epoch per convergence.

    ``event_source(state)`` is polled before every iteration and returns the
    events to apply now (possibly none), or None once it has nothing more
    to send. ``config.max_iterations`` is the per-epoch re-convergence
    budget; ``config.eta`` is ignored in favour of the state's own step.

    The loop ends when no active agent or waypoint remains, or when the
    source is exhausted and the current epoch has been recorded.
    """
    state = initial
    records: list[EpochRecord] = []
    exhausted = event_source is None
    report = ConvergenceReport()
    recorded = False

    while state.topology.active_agents and state.topology.active_waypoints:
        if not exhausted:
            events = event_source(state)
            if events is None:
                exhausted = True
            elif events:
                for ev in events:
                    state = apply_event(state, ev, delta_rule)
                report, recorded = ConvergenceReport(), False
                if not (state.topology.active_agents and state.topology.active_waypoints):
                    break
                check_problem(state.topology, state.params, state.bounds)
        if recorded and exhausted:
            break
        if not recorded and report.iterations >= config.max_iterations:
            raise MaxIterationsExceeded(
                f"epoch {state.epoch} did not re-converge within {config.max_iterations} iterations",
                state.admm,
                report,
            )
        admm = admm_step(state.admm, state.params, state.bounds)
        state = state.replace(admm=admm)
        if recorded:
            continue
        report.iterations += 1
        report.primal_residual = admm.primal_residual
        report.drift = admm.drift
        report.utility_trace.append(plan_utility(admm.pi_d, state.params))
        report.residual_trace.append(report.primal_residual)
        if is_converged(admm, config.epsilon):
            assignment = extract_assignment(admm, state.topology, config.epsilon)
            records.append(EpochRecord(state.epoch, assignment, report))
            state = state.replace(
                epoch=state.epoch + 1,
                assignment_log=state.assignment_log + ((state.epoch, assignment),),
                current=assignment,
            )
            recorded = True
    return state, records


def reconverge(state: DynamicState, config: AdmmConfig = AdmmConfig(max_iterations=500)) -> tuple[DynamicState, EpochRecord]:
    """Run the warm-started solver to the next convergence and record the epoch."""
    state, records = dynamic_loop(state, None, config)
    if not records:
        raise Infeasible("no active agents or waypoints left to assign")
    return state, records[-1]

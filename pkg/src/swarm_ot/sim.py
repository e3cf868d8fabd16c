"""Desk-scale swarm mission simulator.

Agents are constant-speed point masses flying straight lines; nothing
collides (altitude deconfliction is assumed). The clock jumps from one
arrival to the next, so distances are exact path lengths. A binary chemical
sensor reports whether a visited waypoint is in the scenario's chemical set.

Two allocators are compared:

* ``GREEDY`` splits the waypoints before take-off: agents in id order build
  a nearest-neighbour chain of their quota over unclaimed waypoints.
* ``DYNAMIC_OT`` sends agent i to waypoint i first, then after every
  arrival refreshes gamma from current distances, boosts delta near chemical
  hits, and re-extracts all assignments from the warm-started solver.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admm import AdmmConfig, run_until_converged
from .core import Assignment, Bounds, NetworkTopology, UtilityParams
from .dynamic import AgentDropout, DynamicState, ParamUpdate, WaypointReached, apply_event, extract_assignment, reconverge
from .errors import Infeasible, InvalidReading, ScenarioError, Stalled, WrongLength

Point = tuple[float, float]

MIN_UTILITY = 1.0
MAX_UTILITY = 10.0

# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Scenario:
    agent_starts: tuple[Point, ...]
    waypoints: tuple[Point, ...]
    chemical: frozenset[int] = frozenset()
    agent_speed: float = 5.0
    seed: int = 0

    def __post_init__(self):
        starts = tuple((float(x), float(y)) for x, y in self.agent_starts)
        wps = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, "agent_starts", starts)
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "chemical", frozenset(int(c) for c in self.chemical))
        if not starts or not wps:
            raise ScenarioError("a scenario needs at least one agent and one waypoint")
        if not all(math.isfinite(c) for p in starts + wps for c in p):
            raise ScenarioError("positions must be finite")
        if not self.chemical <= set(range(len(wps))):
            raise ScenarioError(f"chemical ids {sorted(self.chemical)} are not all waypoint ids")
        if not (math.isfinite(self.agent_speed) and self.agent_speed > 0):
            raise ScenarioError("agent speed must be positive")

    @property
    def map_diagonal(self) -> float:
        """Diagonal of the bounding box of every start and waypoint."""
        pts = np.array(self.agent_starts + self.waypoints)
        span = pts.max(axis=0) - pts.min(axis=0)
        return float(np.hypot(*span)) or 1.0

    def to_dict(self) -> dict:
        return {
            "agents": [list(p) for p in self.agent_starts],
            "waypoints": [list(p) for p in self.waypoints],
            "chemical": sorted(self.chemical),
            "speed": self.agent_speed,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        missing = {"agents", "waypoints"} - data.keys()
        if missing:
            raise ScenarioError(f"missing key(s): {', '.join(sorted(missing))}")
        try:
            return cls(
                agent_starts=tuple(_point(p, "agents") for p in data["agents"]),
                waypoints=tuple(_point(p, "waypoints") for p in data["waypoints"]),
                chemical=frozenset(int(c) for c in data.get("chemical", ())),
                agent_speed=float(data.get("speed", 5.0)),
                seed=int(data.get("seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc


def _point(p, key: str) -> Point:
    if not isinstance(p, (list, tuple)) or len(p) != 2:
        raise ScenarioError(f"{key}: expected [x, y], got {p!r}")
    return (float(p[0]), float(p[1]))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return Scenario.from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def random_scenario(
    seed: int,
    agents: int = 3,
    waypoints: int = 12,
    size: float = 200.0,
    chemical: int = 3,
    speed: float = 5.0,
) -> Scenario:
    """Waypoints uniform on a ``size`` x ``size`` map, all agents launching from its centre."""
    rng = np.random.default_rng(seed)
    wps = rng.uniform(0.0, size, size=(waypoints, 2))
    chem = rng.choice(waypoints, size=chemical, replace=False)
    launch = (size / 2, size / 2)
    return Scenario(
        agent_starts=(launch,) * agents,
        waypoints=tuple(map(tuple, wps)),
        chemical=frozenset(chem.tolist()),
        agent_speed=speed,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# messages

_WIRE = struct.Struct("<3i")


@dataclass(frozen=True)
class WaypointMessage:
    """What an agent broadcasts on reaching a waypoint: three integers."""

    agent_id: int
    waypoint_id: int
    reading: int


def encode_message(msg: WaypointMessage) -> bytes:
    if msg.reading not in (0, 1):
        raise InvalidReading(f"reading must be 0 or 1, got {msg.reading}")
    try:
        return _WIRE.pack(msg.agent_id, msg.waypoint_id, msg.reading)
    except struct.error as exc:
        raise ValueError(f"message fields must fit in int32: {msg}") from exc


def decode_message(data: bytes) -> WaypointMessage:
    if len(data) != _WIRE.size:
        raise WrongLength(f"expected {_WIRE.size} bytes, got {len(data)}")
    agent_id, waypoint_id, reading = _WIRE.unpack(data)
    if reading not in (0, 1):
        raise InvalidReading(f"reading must be 0 or 1, got {reading}")
    return WaypointMessage(agent_id, waypoint_id, reading)


class MessageBus:
    """In-process FIFO of encoded messages."""

    def __init__(self):
        self._frames: deque[bytes] = deque()
        self.sent = 0

    def publish(self, msg: WaypointMessage) -> None:
        self._frames.append(encode_message(msg))
        self.sent += 1

    def drain(self) -> list[WaypointMessage]:
        out = [decode_message(f) for f in self._frames]
        self._frames.clear()
        return out


# ---------------------------------------------------------------------------
# parameters


def distance_to_utility(distance, map_diagonal: float):
    """Affine map from ``[0, map_diagonal]`` onto ``[10, 1]``; nearer is better."""
    if not map_diagonal > 0:
        raise ValueError("map_diagonal must be positive")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0) or np.any(d > map_diagonal * (1 + 1e-9)):
        raise ValueError("distance must lie in [0, map_diagonal]")
    d = np.minimum(d, map_diagonal)
    u = MIN_UTILITY + (MAX_UTILITY - MIN_UTILITY) * (1.0 - d / map_diagonal)
    return float(u) if u.ndim == 0 else u


def importance_update(
    params: UtilityParams,
    reached: int,
    reading: int,
    scenario: Scenario,
    radius: float,
    boost: float,
    unvisited: Iterable[int] | None = None,
) -> np.ndarray:
    """Delta after a reading at ``reached``.

    A positive reading multiplies the delta column of every unvisited
    waypoint within ``radius`` by ``boost``, clamped to [1, 10].
    """
    if not (radius > 0 and boost > 0):
        raise ValueError("radius and boost must be positive")
    delta = np.array(params.delta)
    if reading == 0:
        return delta
    unvisited = set(range(len(scenario.waypoints))) if unvisited is None else set(unvisited)
    unvisited.discard(reached)
    origin = np.asarray(scenario.waypoints[reached])
    for y in sorted(unvisited):
        if np.hypot(*(np.asarray(scenario.waypoints[y]) - origin)) <= radius:
            delta[:, y] = np.clip(delta[:, y] * boost, MIN_UTILITY, MAX_UTILITY)
    return delta


# ---------------------------------------------------------------------------
# greedy baseline


def greedy_allocate(scenario: Scenario) -> dict[int, list[int]]:
    """Nearest-neighbour chains built agent by agent before take-off."""
    n, m = len(scenario.agent_starts), len(scenario.waypoints)
    quota, extra = divmod(m, n)
    wps = np.array(scenario.waypoints)
    free = list(range(m))
    plan: dict[int, list[int]] = {}
    for a in range(n):
        pos = np.asarray(scenario.agent_starts[a])
        chain: list[int] = []
        for _ in range(quota + (a < extra)):
            d = np.hypot(*(wps[free] - pos).T)
            j = free[int(np.argmin(d))]  # argmin returns the first, i.e. lowest id, on ties
            free.remove(j)
            chain.append(j)
            pos = wps[j]
        plan[a] = chain
    return plan


# ---------------------------------------------------------------------------
# mission


class Allocator(enum.Enum):
    GREEDY = "greedy"
    DYNAMIC_OT = "ot"


@dataclass(frozen=True)
class MissionConfig:
    """Solver and sensing knobs for the OT allocator.

    ``eta`` is lower than the case-study value: distance-derived gammas are
    real-valued and nearly tied pairs make the drift test crawl at large eta.
    ``budget`` caps the iterations of each re-convergence.
    """

    eta: float = 0.3
    epsilon: float = 1e-6
    budget: int = 20_000
    radius: float = 30.0
    boost: float = 2.0
    base_importance: float = 1.0


@dataclass
class MissionReport:
    allocator: str
    per_agent_distance: list[float]
    visit_order: list[tuple[int, int, float]] = field(default_factory=list)
    readings: dict[int, int] = field(default_factory=dict)
    replans: int = 0
    solver_iterations: int = 0
    messages: int = 0

    @property
    def total_distance(self) -> float:
        return float(sum(self.per_agent_distance))


class _Fleet:
    """Positions, targets and odometry of the point-mass agents."""

    def __init__(self, scenario: Scenario):
        self.wps = np.array(scenario.waypoints)
        self.pos = np.array(scenario.agent_starts, dtype=float)
        self.speed = scenario.agent_speed
        self.target: dict[int, int | None] = {a: None for a in range(len(self.pos))}
        self.odometer = np.zeros(len(self.pos))
        self.time = 0.0

    def distances(self) -> np.ndarray:
        """``(agents, waypoints)`` matrix of straight-line distances."""
        return np.linalg.norm(self.pos[:, None, :] - self.wps[None, :, :], axis=2)

    def advance(self) -> list[int]:
        """Fly until the next arrival; return the arriving agents in id order."""
        moving = [a for a, t in self.target.items() if t is not None]
        if not moving:
            return []
        remaining = {a: float(np.hypot(*(self.wps[self.target[a]] - self.pos[a]))) for a in moving}
        step = min(remaining.values())
        arrived = []
        for a in moving:
            r = remaining[a]
            if r <= step + 1e-9:
                self.pos[a] = self.wps[self.target[a]]
                self.odometer[a] += r
                arrived.append(a)
            else:
                self.pos[a] += (self.wps[self.target[a]] - self.pos[a]) * (step / r)
                self.odometer[a] += step
        self.time += step / self.speed
        return arrived


def run_mission(scenario: Scenario, allocator: Allocator | str, config: MissionConfig = MissionConfig()) -> MissionReport:
    allocator = Allocator(allocator)
    if allocator is Allocator.GREEDY:
        return _run_greedy(scenario)
    return _run_ot(scenario, config)


def _visit(fleet: _Fleet, report: MissionReport, scenario: Scenario, bus: MessageBus, agent: int) -> None:
    y = fleet.target[agent]
    reading = int(y in scenario.chemical)
    report.visit_order.append((agent, y, fleet.time))
    report.readings[y] = reading
    bus.publish(WaypointMessage(agent, y, reading))
    fleet.target[agent] = None


def _run_greedy(scenario: Scenario) -> MissionReport:
    fleet = _Fleet(scenario)
    bus = MessageBus()
    queues = {a: deque(chain) for a, chain in greedy_allocate(scenario).items()}
    report = MissionReport("greedy", [])
    for a, q in queues.items():
        fleet.target[a] = q.popleft() if q else None
    while True:
        arrived = fleet.advance()
        if not arrived:
            break
        for a in arrived:
            _visit(fleet, report, scenario, bus, a)
            fleet.target[a] = queues[a].popleft() if queues[a] else None
        bus.drain()
    report.per_agent_distance = fleet.odometer.tolist()
    report.messages = bus.sent
    if len(report.readings) != len(scenario.waypoints):
        raise Stalled("greedy plan left waypoints unvisited")
    return report


def _gamma_update(state: DynamicState, fleet: _Fleet, diagonal: float) -> ParamUpdate:
    edges = tuple(sorted(state.topology.active_edges))
    d = fleet.distances()
    dist = [d[e] for e in edges]
    return ParamUpdate(edges, gamma=tuple(distance_to_utility(dist, diagonal)) if edges else ())


def _select_agents(state: DynamicState, config: MissionConfig) -> set[int]:
    """With fewer waypoints than agents, pick which agents serve them.

    Solves the transposed matching (every waypoint gets exactly one agent)
    with the same solver, cold-started.
    """
    agents = sorted(state.topology.active_agents)
    waypoints = sorted(state.topology.active_waypoints)
    sub = np.ix_(agents, waypoints)
    params = UtilityParams(state.params.delta[sub].T, state.params.gamma[sub].T)
    topo = NetworkTopology.full(len(waypoints), len(agents))
    admm, _ = run_until_converged(
        topo, params, Bounds.matching(*topo.shape), AdmmConfig(config.eta, config.epsilon, config.budget)
    )
    chosen = extract_assignment(admm, topo, config.epsilon)
    return {agents[i] for _, i in chosen.items()}


def _run_ot(scenario: Scenario, config: MissionConfig) -> MissionReport:
    n, m = len(scenario.agent_starts), len(scenario.waypoints)
    if n > m:
        raise Infeasible("dynamic OT needs at least as many waypoints as agents")
    fleet = _Fleet(scenario)
    bus = MessageBus()
    diagonal = scenario.map_diagonal
    report = MissionReport("ot", [])
    solver = AdmmConfig(config.eta, config.epsilon, config.budget)

    def delta_rule(params, topo, event):
        delta = importance_update(
            params, event.waypoint, event.reading, scenario, config.radius, config.boost, topo.active_waypoints
        )
        return params.replace(delta=delta)

    # agents launch together, so the first leg is fixed: agent i -> waypoint i
    first = {a: a for a in range(n)}
    topo = NetworkTopology.full(n, m)
    gamma = distance_to_utility(fleet.distances(), diagonal)
    params = UtilityParams(gamma, np.full((n, m), config.base_importance))
    state = DynamicState.start(topo, params, eta=config.eta)
    state = state.replace(current=Assignment(first))
    fleet.target.update(first)

    while state.topology.active_waypoints:
        arrived = fleet.advance()
        if not arrived:
            raise Stalled(f"no agent is heading anywhere with {len(state.topology.active_waypoints)} waypoints left")
        for a in arrived:
            _visit(fleet, report, scenario, bus, a)
        for msg in bus.drain():
            state = apply_event(state, WaypointReached(msg.agent_id, msg.waypoint_id, msg.reading), delta_rule)
        if not state.topology.active_waypoints:
            break
        if len(state.topology.active_waypoints) < len(state.topology.active_agents):
            keep = _select_agents(state, config)
            for a in sorted(state.topology.active_agents - keep):
                state = apply_event(state, AgentDropout(a))
                fleet.target[a] = None
        state = apply_event(state, _gamma_update(state, fleet, diagonal))
        try:
            state, record = reconverge(state, solver)
        except Infeasible as exc:
            raise Stalled(str(exc)) from exc
        report.replans += 1
        report.solver_iterations += record.report.iterations
        for a, y in record.assignment.items():
            fleet.target[a] = y

    report.per_agent_distance = fleet.odometer.tolist()
    report.messages = bus.sent
    return report

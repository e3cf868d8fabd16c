"""Domain types for agent-to-waypoint optimal transport.

Agents are rows and waypoints are columns of every matrix. Ids are 0-based
throughout the library; :meth:`Assignment.__str__` prints them 1-based to
match how missions are usually described ("UAV 1 goes to waypoint 8").
Matrices are dense ``(agent_count, waypoint_count)`` arrays and the active
edge set masks the entries that matter.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import DimensionMismatch, Infeasible, NonPositiveCoefficient, TooLarge, ValidationError

Edge = tuple[int, int]

#: Largest number of active agents the exhaustive oracle will accept.
ENUMERATION_GUARD = 8


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class NetworkTopology:
    """Bipartite agent/waypoint graph with an active-edge subset."""

    agent_count: int
    waypoint_count: int
    active_edges: frozenset[Edge]
    active_agents: frozenset[int]
    active_waypoints: frozenset[int]

    def __post_init__(self):
        if self.agent_count <= 0 or self.waypoint_count <= 0:
            raise ValidationError("agent_count and waypoint_count must be positive")
        object.__setattr__(self, "active_edges", frozenset((int(x), int(y)) for x, y in self.active_edges))
        object.__setattr__(self, "active_agents", frozenset(int(x) for x in self.active_agents))
        object.__setattr__(self, "active_waypoints", frozenset(int(y) for y in self.active_waypoints))
        for x in self.active_agents:
            if not 0 <= x < self.agent_count:
                raise ValidationError(f"agent {x} out of range")
        for y in self.active_waypoints:
            if not 0 <= y < self.waypoint_count:
                raise ValidationError(f"waypoint {y} out of range")
        for x, y in self.active_edges:
            if x not in self.active_agents or y not in self.active_waypoints:
                raise ValidationError(f"edge ({x}, {y}) references an inactive node")

    @classmethod
    def full(cls, agent_count: int, waypoint_count: int) -> NetworkTopology:
        """Every agent connected to every waypoint."""
        return cls(
            agent_count,
            waypoint_count,
            frozenset((x, y) for x in range(agent_count) for y in range(waypoint_count)),
            frozenset(range(agent_count)),
            frozenset(range(waypoint_count)),
        )

    @classmethod
    def from_mask(cls, mask) -> NetworkTopology:
        mask = np.asarray(mask, dtype=bool)
        n, m = mask.shape
        edges = frozenset(zip(*map(lambda a: a.tolist(), np.nonzero(mask))))
        return cls(n, m, edges, frozenset(range(n)), frozenset(range(m)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.agent_count, self.waypoint_count)

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(agent_count, waypoint_count)`` array of active edges."""
        m = np.zeros(self.shape, dtype=bool)
        if self.active_edges:
            xs, ys = zip(*self.active_edges)
            m[list(xs), list(ys)] = True
        return m

    def waypoints_of(self, agent: int) -> list[int]:
        return sorted(y for x, y in self.active_edges if x == agent)

    def agents_of(self, waypoint: int) -> list[int]:
        return sorted(x for x, y in self.active_edges if y == waypoint)

    def infeasible_agents(self) -> list[int]:
        """Active agents with no active edge."""
        connected = {x for x, _ in self.active_edges}
        return sorted(self.active_agents - connected)

    @property
    def feasible(self) -> bool:
        return not self.infeasible_agents()

    def without_waypoint(self, waypoint: int) -> NetworkTopology:
        return NetworkTopology(
            self.agent_count,
            self.waypoint_count,
            frozenset(e for e in self.active_edges if e[1] != waypoint),
            self.active_agents,
            self.active_waypoints - {waypoint},
        )

    def without_agent(self, agent: int) -> NetworkTopology:
        return NetworkTopology(
            self.agent_count,
            self.waypoint_count,
            frozenset(e for e in self.active_edges if e[0] != agent),
            self.active_agents - {agent},
            self.active_waypoints,
        )


@dataclass(frozen=True, eq=False)
class UtilityParams:
    """Linear utility rates: ``gamma`` on the agent side, ``delta`` on the waypoint side."""

    gamma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        object.__setattr__(self, "delta", _frozen(self.delta))

    @property
    def aggregate(self) -> np.ndarray:
        return self.gamma + self.delta

    def replace(self, gamma=None, delta=None) -> UtilityParams:
        return UtilityParams(self.gamma if gamma is None else gamma, self.delta if delta is None else delta)

    def scaled(self, c: float) -> UtilityParams:
        return UtilityParams(c * self.gamma, c * self.delta)


class Mode(enum.Enum):
    MATCHING = "matching"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class Bounds:
    """Per-agent and per-waypoint bounds on the plan's row and column sums."""

    agent_lower: np.ndarray
    agent_upper: np.ndarray
    waypoint_lower: np.ndarray
    waypoint_upper: np.ndarray
    mode: Mode = Mode.GENERAL

    def __post_init__(self):
        for name in ("agent_lower", "agent_upper", "waypoint_lower", "waypoint_upper"):
            arr = _frozen(getattr(self, name))
            if arr.ndim != 1:
                raise DimensionMismatch(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValidationError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, arr)
        if self.agent_lower.shape != self.agent_upper.shape:
            raise DimensionMismatch("agent bound lengths differ")
        if self.waypoint_lower.shape != self.waypoint_upper.shape:
            raise DimensionMismatch("waypoint bound lengths differ")
        if np.any(self.agent_lower > self.agent_upper) or np.any(self.waypoint_lower > self.waypoint_upper):
            raise ValidationError("lower bound exceeds upper bound")
        if self.mode is Mode.MATCHING:
            if not (np.all(self.agent_lower == 1) and np.all(self.agent_upper == 1)):
                raise ValidationError("matching mode requires agent bounds (1, 1)")
            if not (np.all(self.waypoint_lower == 0) and np.all(self.waypoint_upper == 1)):
                raise ValidationError("matching mode requires waypoint bounds (0, 1)")

    @classmethod
    def matching(cls, agent_count: int, waypoint_count: int) -> Bounds:
        return cls(
            np.ones(agent_count), np.ones(agent_count), np.zeros(waypoint_count), np.ones(waypoint_count), Mode.MATCHING
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.agent_lower), len(self.waypoint_lower))


@dataclass(frozen=True)
class Assignment:
    """Injective map agent -> waypoint."""

    pairs: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        pairs = {int(x): int(y) for x, y in dict(self.pairs).items()}
        if len(set(pairs.values())) != len(pairs):
            raise ValidationError(f"assignment is not injective: {pairs}")
        object.__setattr__(self, "pairs", MappingProxyType(dict(sorted(pairs.items()))))

    def __hash__(self):
        return hash(tuple(self.pairs.items()))

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return dict(self.pairs) == dict(other.pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, agent: int) -> int:
        return self.pairs[agent]

    def items(self):
        return self.pairs.items()

    def __str__(self) -> str:
        return "{" + ", ".join(f"{x + 1}→{y + 1}" for x, y in self.pairs.items()) + "}"

    @classmethod
    def from_one_based(cls, pairs: Mapping[int, int]) -> Assignment:
        return cls({x - 1: y - 1 for x, y in pairs.items()})

    def check_against(self, topology: NetworkTopology) -> None:
        for e in self.pairs.items():
            if e not in topology.active_edges:
                raise ValidationError(f"pair {e} is not an active edge")


def validate_params(topology: NetworkTopology, params: UtilityParams) -> None:
    """Raise unless ``gamma`` and ``delta`` are finite and > 0 on every active edge.

    Linear utilities are concave and monotonically increasing exactly when their
    coefficient is strictly positive, which is what the solver relies on.
    """
    for name in ("gamma", "delta"):
        arr = getattr(params, name)
        if arr.shape != topology.shape:
            raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {topology.shape}")
    for x, y in sorted(topology.active_edges):
        for name in ("gamma", "delta"):
            v = float(getattr(params, name)[x, y])
            if not (math.isfinite(v) and v > 0):
                raise NonPositiveCoefficient((x, y), name, v)


def aggregate_utility(assignment: Assignment, params: UtilityParams) -> float:
    """Sum of ``gamma + delta`` over the assigned pairs."""
    return float(sum(params.gamma[x, y] + params.delta[x, y] for x, y in assignment.items()))


def brute_force_optimal(topology: NetworkTopology, params: UtilityParams) -> tuple[Assignment, float]:
    """Exhaustive matching-mode optimum.

    Walks injective maps over active edges in lexicographic (agent, waypoint)
    order and keeps the first one reaching the maximum, so ties resolve to the
    lexicographically smallest assignment. Branches whose optimistic bound
    cannot beat the incumbent are skipped.
    """
    agents = sorted(topology.active_agents)
    if len(agents) > ENUMERATION_GUARD:
        raise TooLarge(f"{len(agents)} active agents exceeds enumeration guard {ENUMERATION_GUARD}")
    if len(agents) > len(topology.active_waypoints):
        raise Infeasible("more active agents than active waypoints")
    if not agents:
        return Assignment({}), 0.0

    agg = params.gamma + params.delta
    options = [[(y, float(agg[x, y])) for y in topology.waypoints_of(x)] for x in agents]
    for x, opts in zip(agents, options):
        if not opts:
            raise Infeasible(f"agent {x} has no active edge")
    row_best = [max(v for _, v in opts) for opts in options]
    # optimistic[i] = best conceivable utility of agents i.. ignoring injectivity
    optimistic = [0.0] * (len(agents) + 1)
    for i in range(len(agents) - 1, -1, -1):
        optimistic[i] = optimistic[i + 1] + row_best[i]

    best_value = -math.inf
    best: list[int] | None = None
    chosen: list[int] = []
    used: set[int] = set()

    def dfs(i: int, value: float) -> None:
        nonlocal best_value, best
        if i == len(agents):
            if value > best_value:
                best_value, best = value, list(chosen)
            return
        if best is not None and value + optimistic[i] <= best_value:
            return
        for y, v in options[i]:
            if y in used:
                continue
            used.add(y)
            chosen.append(y)
            dfs(i + 1, value + v)
            chosen.pop()
            used.discard(y)

    dfs(0, 0.0)
    if best is None:
        raise Infeasible("no injective assignment covers every active agent")
    assignment = Assignment(dict(zip(agents, best)))
    return assignment, aggregate_utility(assignment, params)


def random_instance(
    rng: np.random.Generator, agents: int, waypoints: int, low: int = 1, high: int = 10
) -> tuple[NetworkTopology, UtilityParams]:
    """Fully connected instance with integer coefficients drawn from ``[low, high]``."""
    gamma = rng.integers(low, high + 1, size=(agents, waypoints)).astype(float)
    delta = rng.integers(low, high + 1, size=(agents, waypoints)).astype(float)
    return NetworkTopology.full(agents, waypoints), UtilityParams(gamma, delta)


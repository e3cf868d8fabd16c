"""Consensus ADMM for the agent/waypoint transport problem.

Each agent keeps its own copy ``pi_d`` of its plan row, each waypoint its own
copy ``pi_s`` of its plan column. One iteration is

1. every agent solves ``min -gamma.v + alpha.v + eta/2 |v - pi|^2`` over its
   row feasible set, which is the Euclidean projection of
   ``pi + (gamma - alpha) / eta`` onto ``{v >= 0, lower <= sum(v) <= upper}``;
2. every waypoint solves ``min -delta.v - alpha.v + eta/2 |pi - v|^2``, the
   projection of ``pi + (delta + alpha) / eta`` onto its column set;
3. ``pi = (pi_d + pi_s) / 2``;
4. ``alpha += eta / 2 * (pi_d - pi_s)``.

Steps 1 and 2 only read the previous iterate, so all agents and waypoints
can solve independently; here they are evaluated as one vectorised batch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import Bounds, Mode, NetworkTopology, UtilityParams, validate_params
from .errors import DimensionMismatch, Infeasible, MaxIterationsExceeded


@dataclass(frozen=True)
class AdmmConfig:
    eta: float = 10.0
    epsilon: float = 1e-6
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.eta > 0 or not self.epsilon > 0 or self.max_iterations <= 0:
            raise ValueError("eta, epsilon and max_iterations must be positive")


@dataclass(frozen=True, eq=False)
class AdmmState:
    """One iterate of the solver.

    All matrices are dense over ``(agents, waypoints)`` and zero outside
    ``support``. ``drift`` is ``max |pi(k) - pi(k-1)|`` of the step that
    produced this state; it is ``inf`` for a fresh state and after any
    change of the network, so convergence is never declared on stale data.
    """

    pi: np.ndarray
    pi_d: np.ndarray
    pi_s: np.ndarray
    alpha: np.ndarray
    support: np.ndarray
    eta: float = 10.0
    iteration: int = 0
    drift: float = float("inf")

    @property
    def primal_residual(self) -> float:
        if not self.support.any():
            return 0.0
        return float(np.max(np.abs(self.pi_d - self.pi_s)[self.support]))

    def replace(self, **changes) -> AdmmState:
        return dataclasses.replace(self, **changes)

    def copy(self) -> AdmmState:
        return self.replace(
            pi=self.pi.copy(),
            pi_d=self.pi_d.copy(),
            pi_s=self.pi_s.copy(),
            alpha=self.alpha.copy(),
            support=self.support.copy(),
        )


@dataclass
class ConvergenceReport:
    iterations: int = 0
    primal_residual: float = float("inf")
    drift: float = float("inf")
    utility_trace: list[float] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)

    @property
    def final_utility(self) -> float:
        return self.utility_trace[-1] if self.utility_trace else float("nan")


def initial_state(topology: NetworkTopology, eta: float = 10.0) -> AdmmState:
    """Uniform plan over each agent's active edges, zero duals."""
    support = topology.mask
    degree = support.sum(axis=1, keepdims=True)
    pi = np.divide(support, degree, out=np.zeros(support.shape), where=degree > 0)
    return AdmmState(pi=pi, pi_d=pi.copy(), pi_s=pi.copy(), alpha=np.zeros_like(pi), support=support, eta=float(eta))


# --------------------------------------------------------------------------
# projection


def _thresholds(W: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per row, the theta with ``sum(max(W - theta, 0)) == target``.

    Masked entries are ``-inf``. Rows without finite entries get 0.
    """
    finite_rows = np.isfinite(W).any(axis=1)
    theta = np.zeros(len(W))
    zero_target = target <= 0
    if np.any(zero_target & finite_rows):
        rows = zero_target & finite_rows
        theta[rows] = np.max(W[rows], axis=1)
    rows = ~zero_target & finite_rows
    if np.any(rows):
        U = -np.sort(-W[rows], axis=1)
        finite = np.isfinite(U)
        cssv = np.cumsum(np.where(finite, U, 0.0), axis=1) - target[rows, None]
        k = np.arange(1, U.shape[1] + 1)
        with np.errstate(invalid="ignore"):
            cond = finite & (U - cssv / k > 0)
        # the largest entry is always in the support; rounding can hide it for tiny targets
        rho = np.maximum(cond.sum(axis=1), 1)
        theta[rows] = cssv[np.arange(len(U)), rho - 1] / rho
    return theta


def project_rows(W, mask, lower, upper) -> np.ndarray:
    """Project each row of ``W`` (restricted to ``mask``) onto a capped simplex.

    Row ``i`` lands in ``{v >= 0, lower[i] <= sum(v) <= upper[i]}`` with
    ``v = 0`` outside ``mask[i]``.
    """
    W = np.asarray(W, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (len(W),))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (len(W),))
    Wm = np.where(mask, W, -np.inf)
    s = np.maximum(Wm, 0.0).sum(axis=1)
    above, below = s > upper, s < lower
    theta = np.zeros(len(W))
    need = above | below
    if need.any():
        target = np.where(above, upper, lower)
        theta[need] = _thresholds(Wm[need], target[need])
    return np.maximum(Wm - theta[:, None], 0.0)


def project_capped_simplex(w, lower: float = 1.0, upper: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``w`` onto ``{v >= 0, lower <= sum(v) <= upper}``.

    The minimiser is ``max(w - theta, 0)``: ``theta = 0`` when the clipped
    vector already satisfies the sum bounds, otherwise the ``theta`` (either
    sign) that puts the sum exactly on the violated bound, found by
    sort-and-threshold.

    >>> project_capped_simplex([2.0, 0.0])
    array([1., 0.])
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    if not 0 <= lower <= upper:
        raise ValueError("need 0 <= lower <= upper")
    return project_rows(w[None, :], np.ones((1, w.size), dtype=bool), [lower], [upper])[0]


# --------------------------------------------------------------------------
# the four steps


def _check_eta(state: AdmmState):
    if not state.eta > 0:
        raise ValueError("eta must be positive")


def uav_subproblem(state: AdmmState, agent: int, params: UtilityParams, bounds: Bounds) -> np.ndarray:
    """New ``pi_d`` row for ``agent``."""
    _check_eta(state)
    w = state.pi[agent] + (params.gamma[agent] - state.alpha[agent]) / state.eta
    return project_rows(
        w[None, :], state.support[agent][None, :], bounds.agent_lower[agent], bounds.agent_upper[agent]
    )[0]


def waypoint_subproblem(state: AdmmState, waypoint: int, params: UtilityParams, bounds: Bounds) -> np.ndarray:
    """New ``pi_s`` column for ``waypoint``."""
    _check_eta(state)
    w = state.pi[:, waypoint] + (params.delta[:, waypoint] + state.alpha[:, waypoint]) / state.eta
    return project_rows(
        w[None, :],
        state.support[:, waypoint][None, :],
        bounds.waypoint_lower[waypoint],
        bounds.waypoint_upper[waypoint],
    )[0]


def agent_updates(state: AdmmState, params: UtilityParams, bounds: Bounds) -> np.ndarray:
    """All agents' subproblems at once; row ``x`` equals ``uav_subproblem(state, x, ...)``."""
    _check_eta(state)
    W = state.pi + (params.gamma - state.alpha) / state.eta
    return project_rows(W, state.support, bounds.agent_lower, bounds.agent_upper)


def waypoint_updates(state: AdmmState, params: UtilityParams, bounds: Bounds) -> np.ndarray:
    """All waypoints' subproblems at once, as a full ``pi_s`` matrix."""
    _check_eta(state)
    W = state.pi + (params.delta + state.alpha) / state.eta
    return project_rows(W.T, state.support.T, bounds.waypoint_lower, bounds.waypoint_upper).T


def consensus_update(state: AdmmState) -> np.ndarray:
    return np.where(state.support, 0.5 * (state.pi_d + state.pi_s), 0.0)


def dual_update(state: AdmmState) -> np.ndarray:
    return np.where(state.support, state.alpha + 0.5 * state.eta * (state.pi_d - state.pi_s), 0.0)


def admm_step(state: AdmmState, params: UtilityParams, bounds: Bounds) -> AdmmState:
    """One synchronous round: local solves, then the consensus/dual barrier."""
    pi_d = agent_updates(state, params, bounds)
    pi_s = waypoint_updates(state, params, bounds)
    mid = state.replace(pi_d=pi_d, pi_s=pi_s)
    pi = consensus_update(mid)
    alpha = dual_update(mid)
    drift = float(np.max(np.abs(pi - state.pi)[state.support])) if state.support.any() else 0.0
    return mid.replace(pi=pi, alpha=alpha, iteration=state.iteration + 1, drift=drift)


def plan_utility(plan: np.ndarray, params: UtilityParams) -> float:
    return float(np.sum((params.gamma + params.delta) * plan))


def is_converged(state: AdmmState, epsilon: float) -> bool:
    return state.primal_residual < epsilon and state.drift < epsilon


def check_problem(topology: NetworkTopology, params: UtilityParams, bounds: Bounds) -> None:
    """Raise if the solver cannot run on this problem."""
    validate_params(topology, params)
    if bounds.shape != topology.shape:
        raise DimensionMismatch(f"bounds shape {bounds.shape} does not match topology {topology.shape}")
    if not topology.feasible:
        raise Infeasible(f"agents without active edges: {topology.infeasible_agents()}")
    if bounds.mode is Mode.MATCHING and len(topology.active_agents) > len(topology.active_waypoints):
        raise Infeasible("more active agents than active waypoints")


def iterate(
    state: AdmmState,
    params: UtilityParams,
    bounds: Bounds,
    epsilon: float,
    max_iterations: int,
    report: ConvergenceReport | None = None,
) -> tuple[AdmmState, ConvergenceReport, bool]:
    """Step until converged or ``max_iterations`` steps were taken. No validation."""
    report = report if report is not None else ConvergenceReport()
    for _ in range(max_iterations):
        state = admm_step(state, params, bounds)
        report.iterations += 1
        report.primal_residual = state.primal_residual
        report.drift = state.drift
        report.utility_trace.append(plan_utility(state.pi_d, params))
        report.residual_trace.append(report.primal_residual)
        if is_converged(state, epsilon):
            return state, report, True
    return state, report, False


def run_until_converged(
    topology: NetworkTopology,
    params: UtilityParams,
    bounds: Bounds,
    config: AdmmConfig = AdmmConfig(),
    state: AdmmState | None = None,
) -> tuple[AdmmState, ConvergenceReport]:
    """Run the distributed solver from ``state`` (default: uniform start).

    Stops once the primal residual and the iterate drift both drop below
    ``config.epsilon``. Raises :class:`MaxIterationsExceeded` carrying the
    final state and report if the budget runs out first.
    """
    check_problem(topology, params, bounds)
    if state is None:
        state = initial_state(topology, config.eta)
    state, report, converged = iterate(state, params, bounds, config.epsilon, config.max_iterations)
    if not converged:
        raise MaxIterationsExceeded(
            f"no convergence after {report.iterations} iterations "
            f"(residual {report.primal_residual:.3g}, drift {report.drift:.3g})",
            state,
            report,
        )
    return state, report

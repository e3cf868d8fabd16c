import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from swarm_ot.admm import (
    AdmmConfig,
    admm_step,
    agent_updates,
    consensus_update,
    dual_update,
    initial_state,
    project_capped_simplex,
    run_until_converged,
    uav_subproblem,
    waypoint_subproblem,
    waypoint_updates,
)
from swarm_ot.casestudy import PRINTED_DELTA, PRINTED_GAMMA, case_study
from swarm_ot.core import Bounds, Mode, NetworkTopology, UtilityParams, aggregate_utility, brute_force_optimal, random_instance
from swarm_ot.dynamic import extract_assignment
from swarm_ot.errors import Infeasible, MaxIterationsExceeded

from conftest import settled_state


def active_set_projection(w, lower, upper):
    """Exact projection by trying every support and every active sum constraint.

    On a support S the candidate is w_S - t with t = 0 (sum constraint slack)
    or t fixed by putting the sum on a bound. The feasible candidate nearest
    to w is the projection. Exponential, so only for short vectors.
    """
    w = np.asarray(w, dtype=float)
    n = len(w)
    best, best_d = None, np.inf
    candidates = [np.zeros(n)]
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            ts = [0.0] + [(w[S].sum() - b) / k for b in (lower, upper)]
            for t in ts:
                v = np.zeros(n)
                v[S] = w[S] - t
                candidates.append(v)
    for v in candidates:
        if v.min() < -1e-12 or not lower - 1e-9 <= v.sum() <= upper + 1e-9:
            continue
        d = np.sum((v - w) ** 2)
        if d < best_d - 1e-15:
            best, best_d = v, d
    return best


# --- projection


def test_projection_already_on_simplex():
    np.testing.assert_allclose(project_capped_simplex([0.5, 0.5]), [0.5, 0.5])


def test_projection_onto_vertex():
    np.testing.assert_allclose(project_capped_simplex([2.0, 0.0]), [1.0, 0.0])


def test_projection_vertex_agrees_with_grid_search():
    w = np.array([2.0, 0.0])
    a = np.linspace(0, 1, 1001)
    grid = np.stack([a, 1 - a], axis=1)
    best = grid[np.argmin(np.sum((grid - w) ** 2, axis=1))]
    np.testing.assert_allclose(project_capped_simplex(w), best, atol=1e-3)


def test_projection_negative_clip():
    np.testing.assert_array_equal(project_capped_simplex([-1.0, -2.0], 0.0, 1.0), [0.0, 0.0])


def test_projection_raises_sum_to_lower_bound():
    v = project_capped_simplex([0.1, 0.2, -1.0], 1.0, 2.0)
    np.testing.assert_allclose(v, active_set_projection([0.1, 0.2, -1.0], 1.0, 2.0))
    assert v.sum() == pytest.approx(1.0)


def test_projection_rejects_bad_input():
    with pytest.raises(ValueError):
        project_capped_simplex([np.nan, 1.0])
    with pytest.raises(ValueError):
        project_capped_simplex([1.0], 2.0, 1.0)


@pytest.mark.parametrize("seed", range(300))
def test_projection_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    w = rng.normal(0, 1.5, n)
    lower = float(rng.uniform(0, 2)) if rng.random() < 0.8 else 0.0
    upper = lower if rng.random() < 0.3 else lower + float(rng.uniform(0, 2))
    np.testing.assert_allclose(project_capped_simplex(w, lower, upper), active_set_projection(w, lower, upper), atol=1e-10)


bounds_pair = st.tuples(st.floats(0, 5), st.floats(0, 5)).map(sorted)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)), bounds_pair)
def test_projection_feasible_and_idempotent(w, bnds):
    lower, upper = bnds
    v = project_capped_simplex(w, lower, upper)
    assert np.all(v >= 0)
    assert lower - 1e-9 * max(1, lower) <= v.sum() <= upper + 1e-9 * max(1, upper)
    np.testing.assert_allclose(project_capped_simplex(v, lower, upper), v, atol=1e-9)


# --- subproblems


def test_uav_subproblem_case_study_row():
    t = NetworkTopology.full(3, 10)
    params = UtilityParams(PRINTED_GAMMA, PRINTED_DELTA)
    state = initial_state(t, eta=10.0)
    np.testing.assert_allclose(state.pi[0], 0.1)
    row = uav_subproblem(state, 0, params, Bounds.matching(3, 10))
    np.testing.assert_allclose(row, [0, 0.3, 0, 0, 0, 0.3, 0, 0, 0.1, 0.3], atol=1e-12)


def test_uav_subproblem_single_edge():
    mask = np.array([[False, True, False], [True, True, True]])
    t = NetworkTopology.from_mask(mask)
    state = initial_state(t)
    params = UtilityParams(np.full((2, 3), 7.0), np.ones((2, 3)))
    np.testing.assert_array_equal(uav_subproblem(state, 0, params, Bounds.matching(2, 3)), [0, 1, 0])


def test_uav_subproblem_fixed_point_when_alpha_equals_gamma():
    t, p, b = case_study()
    state = initial_state(t)
    state = state.replace(alpha=np.array(p.gamma))
    np.testing.assert_allclose(uav_subproblem(state, 1, p, b), state.pi[1], atol=1e-15)


def test_waypoint_subproblem_under_cap():
    t = NetworkTopology.full(3, 2)
    state = initial_state(t).replace(pi=np.zeros((3, 2)))
    params = UtilityParams(np.ones((3, 2)), np.ones((3, 2)))
    col = waypoint_subproblem(state, 0, params, Bounds.matching(3, 2))
    np.testing.assert_allclose(col, [0.1, 0.1, 0.1])


def test_waypoint_subproblem_negative_column():
    t = NetworkTopology.full(3, 2)
    state = initial_state(t).replace(pi=np.zeros((3, 2)), alpha=np.full((3, 2), -50.0))
    params = UtilityParams(np.ones((3, 2)), np.ones((3, 2)))
    np.testing.assert_array_equal(waypoint_subproblem(state, 1, params, Bounds.matching(3, 2)), [0, 0, 0])


def test_waypoint_subproblem_cap_binds():
    t = NetworkTopology.full(3, 1)
    state = initial_state(t).replace(pi=np.full((3, 1), 0.7))
    params = UtilityParams(np.ones((3, 1)), np.ones((3, 1)))  # w = 0.7 + 1/10 = 0.8
    np.testing.assert_allclose(waypoint_subproblem(state, 0, params, Bounds.matching(3, 1)), [1 / 3] * 3)


def _agent_objective(v, state, x, params):
    return float(-params.gamma[x] @ v + state.alpha[x] @ v + state.eta / 2 * np.sum((v - state.pi[x]) ** 2))


def test_uav_subproblem_beats_feasible_samples(rng):
    t, p, b = case_study()
    state = initial_state(t)
    for _ in range(5):
        state = admm_step(state, p, b)
    for x in range(3):
        v = uav_subproblem(state, x, p, b)
        best = _agent_objective(v, state, x, p)
        for z in rng.dirichlet(np.ones(10), size=200):
            assert best <= _agent_objective(z, state, x, p) + 1e-12
        # small feasible perturbations stay worse as well
        for _ in range(50):
            z = project_capped_simplex(v + rng.normal(0, 1e-3, 10))
            assert best <= _agent_objective(z, state, x, p) + 1e-12


def test_batched_updates_equal_per_item_in_any_order(rng):
    t, p, b = case_study()
    state = initial_state(t)
    for _ in range(3):
        state = admm_step(state, p, b)
    D = agent_updates(state, p, b)
    S = waypoint_updates(state, p, b)
    for x in rng.permutation(3):
        np.testing.assert_allclose(uav_subproblem(state, int(x), p, b), D[x], atol=1e-15)
    for y in rng.permutation(10):
        np.testing.assert_allclose(waypoint_subproblem(state, int(y), p, b), S[:, y], atol=1e-15)


# --- consensus and dual


def _pair(d, s, alpha=0.0, eta=10.0):
    state = settled_state([[0.0]], eta=eta)
    return state.replace(pi_d=np.array([[d]]), pi_s=np.array([[s]]), alpha=np.array([[alpha]]))


@pytest.mark.parametrize("d, s, expected", [(1.0, 0.0, 0.5), (0.4, 0.4, 0.4), (0.3, 0.1, 0.2)])
def test_consensus_update(d, s, expected):
    assert consensus_update(_pair(d, s))[0, 0] == pytest.approx(expected)


@pytest.mark.parametrize(
    "alpha, eta, d, s, expected", [(0.0, 10.0, 0.3, 0.1, 1.0), (0.7, 10.0, 0.2, 0.2, 0.7), (-0.5, 2.0, 0.0, 0.5, -1.0)]
)
def test_dual_update(alpha, eta, d, s, expected):
    assert dual_update(_pair(d, s, alpha, eta))[0, 0] == pytest.approx(expected)


def test_inactive_entries_stay_zero():
    t = NetworkTopology.full(2, 3).without_waypoint(1)
    p = UtilityParams(np.full((2, 3), 2.0), np.full((2, 3), 3.0))
    state = initial_state(t)
    for _ in range(10):
        state = admm_step(state, p, Bounds.matching(2, 3))
        for a in (state.pi, state.pi_d, state.pi_s, state.alpha):
            assert np.all(a[:, 1] == 0)
        assert np.all(state.pi_d >= 0) and np.all(state.pi_s >= 0)
        np.testing.assert_array_equal(state.pi, 0.5 * (state.pi_d + state.pi_s))


# --- solver loop


def test_case_study_converges():
    t, p, b = case_study()
    state, report = run_until_converged(t, p, b, AdmmConfig(eta=10.0))
    assert report.primal_residual < 1e-6 and report.drift < 1e-6
    assert len(report.utility_trace) == report.iterations == state.iteration
    assert aggregate_utility(extract_assignment(state, t), p) == 50


def test_single_edge_converges_to_one():
    t = NetworkTopology.full(1, 1)
    state, _ = run_until_converged(t, UtilityParams([[2.0]], [[3.0]]), Bounds.matching(1, 1))
    assert state.pi[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(50))
def test_random_three_by_ten_matches_oracle(seed):
    t, p = random_instance(np.random.default_rng(1000 + seed), 3, 10)
    state, _ = run_until_converged(t, p, Bounds.matching(3, 10))
    assert aggregate_utility(extract_assignment(state, t), p) == brute_force_optimal(t, p)[1]


def lp_optimum(params, bounds):
    """Centralised optimum of the general transport LP, by scipy's HiGHS."""
    n, m = params.gamma.shape
    c = -params.aggregate.ravel()
    rows = np.kron(np.eye(n), np.ones(m))
    cols = np.kron(np.ones(n), np.eye(m))
    A = np.vstack([rows, -rows, cols, -cols])
    ub = np.concatenate([bounds.agent_upper, -bounds.agent_lower, bounds.waypoint_upper, -bounds.waypoint_lower])
    res = linprog(c, A_ub=A, b_ub=ub, bounds=(0, None), method="highs")
    assert res.status == 0
    return -res.fun


@pytest.mark.parametrize("seed", range(5))
def test_general_mode_reaches_lp_optimum(seed):
    rng = np.random.default_rng(seed)
    t = NetworkTopology.full(2, 3)
    lo = rng.uniform(0, 1, 2)
    b = Bounds(lo, lo + rng.uniform(0, 1, 2), [0.0, 0.0, 0.2], [1.0, 1.0, 1.0], Mode.GENERAL)
    p = UtilityParams(rng.integers(1, 11, (2, 3)).astype(float), rng.integers(1, 11, (2, 3)).astype(float))
    state, _ = run_until_converged(t, p, b, AdmmConfig(eta=1.0, max_iterations=50000))
    rows, cols = state.pi.sum(axis=1), state.pi.sum(axis=0)
    assert np.all(rows >= b.agent_lower - 1e-5) and np.all(rows <= b.agent_upper + 1e-5)
    assert np.all(cols >= b.waypoint_lower - 1e-5) and np.all(cols <= b.waypoint_upper + 1e-5)
    assert float(np.sum(p.aggregate * state.pi)) == pytest.approx(lp_optimum(p, b), abs=1e-4)


def test_budget_exhaustion_carries_state():
    t, p, b = case_study()
    with pytest.raises(MaxIterationsExceeded) as info:
        run_until_converged(t, p, b, AdmmConfig(max_iterations=1))
    assert info.value.report.iterations == 1
    assert info.value.state.iteration == 1


def test_more_agents_than_waypoints_is_infeasible():
    with pytest.raises(Infeasible):
        run_until_converged(NetworkTopology.full(3, 2), UtilityParams(np.ones((3, 2)), np.ones((3, 2))), Bounds.matching(3, 2))


def test_config_validation():
    with pytest.raises(ValueError):
        AdmmConfig(eta=0)
    with pytest.raises(ValueError):
        AdmmConfig(max_iterations=0)


def test_scaling_leaves_iterates_unchanged():
    t, p, b = case_study()
    c = 3.7
    s1 = initial_state(t, eta=10.0)
    s2 = initial_state(t, eta=10.0 * c)
    for _ in range(200):
        s1 = admm_step(s1, p, b)
        s2 = admm_step(s2, p.scaled(c), b)
        np.testing.assert_allclose(s2.pi, s1.pi, atol=1e-9)
        np.testing.assert_allclose(s2.alpha, c * s1.alpha, atol=1e-9 * c)


def test_solver_is_deterministic():
    t, p, b = case_study()
    a, ra = run_until_converged(t, p, b)
    c, rc = run_until_converged(t, p, b)
    assert ra.utility_trace == rc.utility_trace
    np.testing.assert_array_equal(a.pi, c.pi)

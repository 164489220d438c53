import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy.optimize import linprog

from macgame.lp import (
    LinearProgram,
    LPInfeasible,
    LPUnbounded,
    build_polytope,
    evaluate,
    feasible_vertex,
    idle_measure,
    is_vertex,
    marginal,
    occupation_to_policy,
    policy_to_occupation,
    reward_vector,
    simplex_solve,
)
from macgame.model import GameSpec, UserModel, build_bf_fsmc, reference_game, reference_user
from macgame.oracle import tiny_game
from macgame.throughput import ThroughputSelector, rate

EMPTY = (np.zeros((0, 2)), [])


def test_segment():
    sol = simplex_solve(LinearProgram([1, 0], [[1, 1]], [1], *EMPTY))
    np.testing.assert_allclose(sol.x, [1, 0])
    assert sol.value == pytest.approx(1.0)


def test_infeasible_and_unbounded():
    with pytest.raises(LPInfeasible):
        simplex_solve(LinearProgram([1, 0], [[1, 1]], [1], [[1, 1]], [0.5]))
    with pytest.raises(LPUnbounded):
        simplex_solve(LinearProgram([1, 0], [[1, -1]], [0], np.zeros((0, 2)), []))


def test_degenerate_cycling_example_terminates():
    # Beale's cycling example, maximisation form
    c = [0.75, -150, 0.02, -6]
    a_ub = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    sol = simplex_solve(LinearProgram(c, np.zeros((0, 4)), [], a_ub, [0, 0, 1]))
    assert sol.value == pytest.approx(0.05, abs=1e-12)


def test_redundant_equalities():
    lp = LinearProgram([1, 2, 3], [[1, 1, 1], [2, 2, 2]], [1, 2], np.zeros((0, 3)), [])
    sol = simplex_solve(lp)
    np.testing.assert_allclose(sol.x, [0, 0, 1], atol=1e-12)


def _random_lp(seed, n, m_eq, m_ub):
    rng = np.random.default_rng(seed)
    x0 = rng.random(n) * (rng.random(n) < 0.6)  # a feasible point keeps the instance nonempty
    a_eq = rng.normal(size=(m_eq, n))
    a_ub = rng.normal(size=(m_ub, n))
    b_ub = a_ub @ x0 + rng.random(m_ub)
    # box row keeps the problem bounded
    a_ub = np.vstack([a_ub, np.ones(n)])
    b_ub = np.append(b_ub, x0.sum() + 1 + rng.random())
    c = rng.normal(size=n)
    if rng.random() < 0.3:
        c = np.round(c)  # integral costs give ties
    return LinearProgram(c, a_eq, a_eq @ x0, a_ub, b_ub)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(0, 4), st.integers(0, 5))
def test_simplex_matches_highs(seed, n, m_eq, m_ub):
    lp = _random_lp(seed, n, min(m_eq, n - 1), m_ub)
    ref = linprog(-lp.objective, A_ub=lp.ub_lhs, b_ub=lp.ub_rhs, A_eq=lp.eq_lhs if len(lp.eq_rhs) else None,
                  b_eq=lp.eq_rhs if len(lp.eq_rhs) else None, bounds=(0, None), method="highs")
    assert ref.status == 0
    sol = simplex_solve(lp)
    assert sol.value == pytest.approx(-ref.fun, abs=1e-8 * (1 + abs(ref.fun)))
    assert np.abs(lp.eq_lhs @ sol.x - lp.eq_rhs).max(initial=0) < 1e-8
    assert (lp.ub_lhs @ sol.x - lp.ub_rhs).max() < 1e-8
    assert sol.x.min() > -1e-10


@pytest.mark.parametrize("saturated", [True, False])
def test_best_response_lp_matches_highs(saturated):
    spec = reference_game(ThroughputSelector.matched_filter(), saturated=saturated)
    rng = np.random.default_rng(1)
    profile = [feasible_vertex(u) for u in spec.users]
    poly = build_polytope(spec.users[0])
    for _ in range(3):
        reward = reward_vector(spec, 0, profile) + 0.01 * rng.random(poly.n_vars)
        sol = simplex_solve(poly.lp(reward))
        ref = linprog(-reward, A_ub=poly.ub_lhs, b_ub=poly.ub_rhs, A_eq=poly.eq_lhs, b_eq=poly.eq_rhs,
                      bounds=(0, None), method="highs")
        # HiGHS stops at its default 1e-7 feasibility/optimality tolerances on
        # these badly scaled rows, so it may sit slightly below the optimum
        assert sol.value >= -ref.fun - 1e-9
        assert sol.value == pytest.approx(-ref.fun, abs=1e-7)
        assert sol.reduced_costs.min() >= -1e-9
        assert poly.residual(sol.x) < 1e-12
        assert is_vertex(sol.x, poly)


def test_polytope_sizes():
    sat = build_polytope(reference_user(True))
    assert sat.n_vars == 24 and sat.eq_lhs.shape[0] == 4 + 1 and sat.ub_lhs.shape[0] == 1
    uns = build_polytope(reference_user(False))
    assert uns.n_vars == 528 and uns.eq_lhs.shape[0] == 44 + 1 and uns.ub_lhs.shape[0] == 2
    with pytest.raises(ValueError):
        build_polytope(reference_user(True), "unsaturated")


@pytest.mark.parametrize("saturated", [True, False])
def test_start_measures_are_feasible(saturated):
    u = reference_user(saturated)
    poly = build_polytope(u)
    for z in (feasible_vertex(u), idle_measure(u)):
        assert poly.residual(z) < 1e-12
        assert z.sum() == pytest.approx(1.0, abs=1e-12)
        assert is_vertex(z, poly)


def test_reward_with_silent_opponents_is_interference_free():
    spec = reference_game(ThroughputSelector.matched_filter())
    silent = [idle_measure(u) for u in spec.users]
    r = reward_vector(spec, 0, silent)
    for (s, a), v in zip(spec.users[0].space.pairs(), r):
        assert v == pytest.approx(np.log2(1 + s[0] / 3 * a[0]), abs=1e-14)


def test_reward_is_zero_on_empty_queue_or_idle_power():
    spec = reference_game(ThroughputSelector.matched_filter(), saturated=False)
    profile = [feasible_vertex(u) for u in spec.users]
    r = reward_vector(spec, 1, profile)
    for (s, a), v in zip(spec.users[1].space.pairs(), r):
        if s[1] == 0 or a[0] == 0:
            assert v == 0.0


def test_reward_matches_brute_force_sum():
    spec = tiny_game()
    u = spec.users[1]
    opp = np.full(u.space.size, 1 / u.space.size)
    r = reward_vector(spec, 0, [None, opp])
    for idx, (s, a) in enumerate(spec.users[0].space.pairs()):
        want = sum(opp[j] * rate(spec, 0, (s[0], s2[0]), (a[0], a2[0])) for j, (s2, a2) in enumerate(u.space.pairs()))
        assert r[idx] == pytest.approx(want, abs=1e-15)


def test_reward_matches_brute_force_three_users():
    spec = reference_game(ThroughputSelector.sic_endpoint(4))
    rng = np.random.default_rng(5)
    prof = [rng.dirichlet(np.ones(24)) for _ in range(3)]
    m = [marginal(u, z) for u, z in zip(spec.users, prof)]
    r = reward_vector(spec, 2, prof)
    for idx in [0, 7, 23]:
        s, a = list(spec.users[2].space.pairs())[idx]
        want = 0.0
        for k0, l0, k1, l1 in itertools.product(range(4), range(6), range(4), range(6)):
            want += m[0][k0, l0] * m[1][k1, l1] * rate(spec, 2, (k0, k1, s[0]), (l0, l1, a[0]))
        assert r[idx] == pytest.approx(want, abs=1e-13)


def test_policy_of_a_single_atom():
    u = reference_user(True)
    z = np.zeros(24)
    z[2 * 6 + 3] = 1.0
    pol = occupation_to_policy(z, u)
    assert pol[2, 3] == 1.0
    np.testing.assert_allclose(pol[0], 1 / 6)


def test_policy_of_uniform_split():
    u = reference_user(True)
    z = np.zeros((4, 6))
    z[1, :] = 0.3 / 6
    z[0, 0] = 0.7
    np.testing.assert_allclose(occupation_to_policy(z.ravel(), u)[1], 1 / 6)


@pytest.mark.parametrize("saturated", [True, False])
@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**32 - 1))
def test_policy_measure_round_trip(saturated, seed):
    u = reference_user(saturated, q_max=4)
    rng = np.random.default_rng(seed)
    pol = rng.dirichlet(np.ones(u.space.n_actions), size=u.space.n_states)
    z = policy_to_occupation(u, pol)
    assert z.sum() == pytest.approx(1.0, abs=1e-12)
    assert build_polytope(u).eq_lhs @ z == pytest.approx(build_polytope(u).eq_rhs, abs=1e-12)
    np.testing.assert_allclose(policy_to_occupation(u, occupation_to_policy(z, u)), z, atol=1e-8)


def test_saturated_state_marginal_is_channel_stationary():
    u = reference_user(True)
    pol = np.random.default_rng(0).dirichlet(np.ones(6), size=4)
    z = policy_to_occupation(u, pol).reshape(4, 6)
    np.testing.assert_allclose(z.sum(axis=1), [0.2, 0.3, 0.3, 0.2], atol=1e-13)


def test_evaluate():
    u = reference_user(True)
    poly = build_polytope(u)
    sol = simplex_solve(poly.lp(np.arange(24.0)))
    rate_, c1, c2 = evaluate(sol.x, np.zeros(24), u)
    assert rate_ == 0 and c1 <= 2 + 1e-9 and c2 is None


def test_midpoint_is_not_a_vertex():
    poly = build_polytope(reference_user(True))
    a = simplex_solve(poly.lp(np.arange(24.0))).x
    b = simplex_solve(poly.lp(-np.arange(24.0))).x
    assert is_vertex(a, poly) and is_vertex(b, poly)
    assert not is_vertex((a + b) / 2, poly)
    assert not is_vertex(a + 0.1, poly)

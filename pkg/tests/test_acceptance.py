"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when this file is run as a script.
"""
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from macgame.config import TABLE2, load_config, table2_preset
from macgame.lp import build_polytope, is_vertex, reward_vector, simplex_solve
from macgame.model import reference_game
from macgame.oracle import enumerate_vertices, exhaustive_equilibrium_check, oracle_best_response, tiny_game
from macgame.solver import algorithm1, algorithm2, simulate, solve, verify_cne
from macgame.throughput import (
    TABLE1_BLOCKS,
    DecodingRandomization,
    ThroughputSelector,
    channel_slice_game,
    is_exact_potential,
    make_randomization,
    rate_table,
    table1_partition,
)

from conftest import solved

TOL = 5e-3
RESULTS: list[str] = []


def record(n: int, text: str, ok: bool) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {text}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def fmt(xs) -> str:
    return "(" + ", ".join(f"{x:.4f}" for x in xs) + ")"


def within(rates, ref, tol=TOL) -> bool:
    return bool(np.abs(np.asarray(rates) - np.asarray(ref)).max() <= tol)


def timed_solve(game, mode):
    cfg = load_config(table2_preset(game, mode))
    spec = cfg.game()
    t0 = time.perf_counter()
    res = solve(spec, eps=cfg.solver["eps"], max_sweeps=cfg.solver["max_sweeps"])
    return res, time.perf_counter() - t0


def test_criterion_01_saturated_matched_filter():
    res, secs = timed_solve("in", "saturated")
    ref = TABLE2[("in", "saturated")][0]
    ok = res.converged and within(res.rates, ref) and secs < 10
    record(1, f"saturated matched filter {fmt(res.rates)} vs {fmt(ref)}, {secs:.2f}s (< 10s)", ok)


def test_criterion_02_unsaturated_matched_filter():
    res, secs = timed_solve("in", "unsaturated")
    ref = TABLE2[("in", "unsaturated")][0]
    ok = res.converged and within(res.rates, ref) and secs < 60
    record(2, f"unsaturated matched filter {fmt(res.rates)} vs {fmt(ref)}, {secs:.2f}s (< 60s)", ok)


def _check(n, cases):
    parts, ok = [], True
    for game, mode in cases:
        _, res = solved(game, mode)
        ref = TABLE2[(game, mode)][0]
        good = res.converged and within(res.rates, ref)
        ok &= good
        parts.append(f"{game}/{mode} {fmt(res.rates)} vs {fmt(ref)}")
    record(n, "; ".join(parts), ok)


def test_criterion_03_singleton_blocks():
    _check(3, [("a11", "saturated"), ("a11", "unsaturated")])


def test_criterion_04_two_and_three_user_blocks():
    _check(4, [("a42", "saturated"), ("a51", "saturated"), ("a51", "unsaturated")])


def test_criterion_05_multiple_equilibria_game():
    _, res = solved("a21", "saturated")
    refs = TABLE2[("a21", "saturated")]
    hit = [r for r in refs if within(res.rates, r)]
    ok = res.converged and bool(hit)
    record(5, f"first-then-pair blocks {fmt(res.rates)} matches {fmt(hit[0]) if hit else 'neither listed equilibrium'}", ok)


def test_criterion_06_identical_interest_games():
    _check(6, [("s", "saturated"), ("s", "unsaturated"), ("sc", "saturated"), ("sc", "unsaturated")])


def test_criterion_07_budgets_hold():
    worst_p, worst_q, ok = 0.0, 0.0, True
    for (game, mode) in TABLE2:
        _, res = solved(game, mode)
        ok &= res.converged
        worst_p = max(worst_p, res.power_costs.max())
        ok &= bool((res.power_costs <= 2 + 1e-6).all())
        if mode == "unsaturated":
            worst_q = max(worst_q, res.queue_costs.max())
            ok &= bool((res.queue_costs <= 5 + 1e-6).all())
    record(7, f"all 14 runs: max power cost {worst_p:.6f} <= 2, max queue cost {worst_q:.6f} <= 5", ok)


def test_criterion_08_partition_games_have_pure_equilibria():
    bad = []
    for key in sorted(TABLE1_BLOCKS):
        part = table1_partition(*key)
        for saturated in (True, False):
            spec = reference_game(ThroughputSelector.sic_randomized(part), saturated=saturated)
            res = algorithm2(spec, part)
            pure = all(is_vertex(z, build_polytope(u)) for z, u in zip(res.measures, spec.users))
            if not (res.converged and pure):
                bad.append((key, saturated))
    record(8, f"13 randomizations x 2 modes: converged with vertex measures, failures {bad}", not bad)


# Published randomization table, rows alpha(p_a, p_e), columns m = 1..6
TABLE1 = {
    (1, 1): "1 0 0 0 0 0",
    (1, 2): "0 1 0 0 0 0",
    (1, 3): "0 0 1 0 0 0",
    (1, 4): "0 0 0 1 0 0",
    (1, 5): "0 0 0 0 1 0",
    (1, 6): "0 0 0 0 0 1",
    (2, 1): "1/2 1/2 0 0 0 0",
    (2, 2): "0 0 0 1/2 0 1/2",
    (3, 1): "0 0 1/2 1/2 0 0",
    (3, 2): "0 1/2 0 0 1/2 0",
    (4, 1): "0 0 0 0 1/2 1/2",
    (4, 2): "1/2 0 1/2 0 0 0",
    (5, 1): "1/6 1/6 1/6 1/6 1/6 1/6",
}


def test_criterion_09_randomization_table():
    mism = []
    for key, row in TABLE1.items():
        want = tuple(Fraction(x) for x in row.split())
        if make_randomization(table1_partition(*key)).mass != want:
            mism.append(key)
    record(9, f"13 rows reproduced with exact rational equality, mismatches {mism}", not mism)


def test_criterion_10_sum_capacity_identity():
    base = reference_game(ThroughputSelector.matched_filter())
    sc = rate_table(base.with_throughput(ThroughputSelector.sum_capacity()), 0)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        w = rng.dirichlet(np.full(6, 0.5))
        w /= w.sum()
        spec = base.with_throughput(ThroughputSelector.sic_randomized(DecodingRandomization(tuple(w))))
        total = sum(np.asarray(rate_table(spec, i)) for i in range(3))
        worst = max(worst, float(np.abs(total - sc).max()))
    record(10, f"200 random decoding laws over the 13824-point grid, max |sum - capacity| {worst:.2e} <= 1e-12", worst <= 1e-12)


def test_criterion_11_oracle_equivalence():
    spec = tiny_game()
    assert build_polytope(spec.users[0]).n_vars <= 20
    res = algorithm1(spec)
    worst = 0.0
    for i, u in enumerate(spec.users):
        poly = build_polytope(u)
        verts = enumerate_vertices(poly)
        for prof in (res.measures, [np.full(4, 0.25)] * 2, [verts.vertices[-1]] * 2):
            reward = reward_vector(spec, i, prof)
            worst = max(worst, abs(simplex_solve(poly.lp(reward)).value - oracle_best_response(reward, verts)[2]))
    ok = res.converged and worst <= 1e-9 and exhaustive_equilibrium_check(spec, res.measures)
    record(11, f"tiny game: simplex vs vertex enumeration gap {worst:.1e}, exhaustive check on converged output", ok)


def test_criterion_12_monte_carlo():
    spec, res = solved("in", "saturated")
    sim = simulate(spec, res.policies, 1_000_000, seed=0)
    d_rate = float(np.abs(sim.rates - res.rates).max())
    d_pow = float(np.abs(sim.power_costs - res.power_costs).max())
    d_occ = max(float(np.abs(o - [0.2, 0.3, 0.3, 0.2]).max()) for o in sim.channel_occupancy)
    ok = d_rate <= 1e-2 and d_pow <= 1e-2 and d_occ <= 5e-3
    record(12, f"1e6 slots: |rate err| {d_rate:.4f}, |power err| {d_pow:.4f} (<= 1e-2), |occupancy err| {d_occ:.4f} (<= 5e-3)", ok)


def test_criterion_13_potential_games():
    base = reference_game(ThroughputSelector.matched_filter())
    failures = []
    for sel in (ThroughputSelector.sum(), ThroughputSelector.sum_capacity()):
        spec = base.with_throughput(sel)
        for k in itertools.product(range(4), repeat=3):
            if not is_exact_potential(3, [6, 6, 6], channel_slice_game(spec, k))[0]:
                failures.append((sel.kind, k))
    pennies = np.array([[[1, -1], [-1, 1]], [[-1, 1], [1, -1]]], dtype=float)
    rejects = not is_exact_potential(2, [2, 2], pennies)[0]
    record(13, f"64 channel slices x 2 identical-interest games potential (failures {len(failures)}); matching pennies rejected: {rejects}",
           not failures and rejects)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))

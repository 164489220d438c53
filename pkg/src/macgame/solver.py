"""Best-response dynamics for constrained Markov games.

Iterates live in occupation-measure space: each user's best response is an LP
over its own polytope with a reward vector that depends on the others only
through their measures. Policies are derived at the end for reporting and
simulation.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import (
    build_polytope,
    clean_measure,
    evaluate,
    feasible_vertex,
    idle_measure,
    is_vertex,
    occupation_to_policy,
    reward_vector,
    simplex_solve,
)
from .model import GameSpec
from .throughput import PartitionScheme, rate_table

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-8
DEFAULT_MAX_SWEEPS = 500


class ProvenanceMismatch(ValueError):
    """The decoding randomization was not generated by the given partition."""


@dataclass
class EquilibriumResult:
    measures: list
    policies: list
    rates: np.ndarray
    power_costs: np.ndarray
    queue_costs: Optional[np.ndarray]
    iterations: int
    pure: list
    converged: bool
    epsilon: float
    history: list = field(default_factory=list, repr=False)


@dataclass
class CNEReport:
    gains: np.ndarray
    eps: float

    @property
    def ok(self) -> bool:
        return bool((self.gains <= self.eps).all())


def _solve_user(spec: GameSpec, i: int, profile):
    reward = reward_vector(spec, i, profile)
    sol = simplex_solve(build_polytope(spec.users[i]).lp(reward))
    return clean_measure(sol.x), sol.value, reward


def best_response(spec: GameSpec, i: int, profile):
    """Optimal vertex measure for user ``i`` against ``profile`` and its rate.

    ``profile[i]`` is ignored. Raises :class:`macgame.lp.LPInfeasible` when the
    budgets admit no policy.
    """
    z, value, _ = _solve_user(spec, i, profile)
    return z, value


def default_init(spec: GameSpec, kind: str = "phase1") -> list:
    if kind == "phase1":
        return [feasible_vertex(u) for u in spec.users]
    if kind == "idle":
        return [idle_measure(u) for u in spec.users]
    raise ValueError(f"unknown init {kind!r}")


@dataclass
class RestrictedGame:
    """``spec`` with only ``active`` users updating; the rest sit at ``fixed``."""

    spec: GameSpec
    active: tuple
    fixed: dict

    def profile(self, measures) -> list:
        out = list(measures)
        for i, z in self.fixed.items():
            out[i] = z
        return out


def restrict_game(spec: GameSpec, active, fixed=None) -> RestrictedGame:
    active = tuple(sorted(set(active)))
    fixed = dict(fixed or {})
    if not active:
        raise ValueError("restriction needs at least one active user")
    users = set(range(spec.n_users))
    if set(active) & set(fixed):
        raise ValueError(f"users {sorted(set(active) & set(fixed))} are both active and fixed")
    if set(active) | set(fixed) != users:
        missing = sorted(users - set(active) - set(fixed))
        raise ValueError(f"users {missing} are neither active nor fixed")
    return RestrictedGame(spec, active, fixed)


def _finish(spec, profile, sweeps, converged, eps, history) -> EquilibriumResult:
    rates, p_costs, q_costs, pure = [], [], [], []
    for i, user in enumerate(spec.users):
        rate, c1, c2 = evaluate(profile[i], reward_vector(spec, i, profile), user)
        rates.append(rate)
        p_costs.append(c1)
        q_costs.append(c2)
        pure.append(is_vertex(profile[i], build_polytope(user)))
    return EquilibriumResult(
        measures=[np.array(z) for z in profile],
        policies=[occupation_to_policy(z, u) for z, u in zip(profile, spec.users)],
        rates=np.array(rates),
        power_costs=np.array(p_costs),
        queue_costs=None if spec.mode == "saturated" else np.array(q_costs),
        iterations=sweeps,
        pure=pure,
        converged=converged,
        epsilon=eps,
        history=history,
    )


def algorithm1(
    game,
    init: Optional[Sequence] = None,
    eps: float = DEFAULT_EPS,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> EquilibriumResult:
    """Round-robin best response until a full sweep changes nothing.

    ``game`` is a :class:`GameSpec` or a :class:`RestrictedGame`. A user keeps
    its current measure unless the best response beats it by more than
    ``eps``; the run stops when no measure moved by more than ``eps`` (sup
    norm) in a sweep, or after ``max_sweeps`` sweeps with ``converged=False``.
    """
    view = game if isinstance(game, RestrictedGame) else restrict_game(game, range(game.n_users))
    spec = view.spec
    profile = view.profile(default_init(spec) if init is None else [np.asarray(z, float) for z in init])
    history = []
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for i in view.active:
            z, value, reward = _solve_user(spec, i, profile)
            current = float(reward @ profile[i])
            if value > current + eps:
                change = max(change, float(np.abs(z - profile[i]).max()))
                profile[i] = z
        history.append(change)
        log.debug("sweep %d: max change %.3g", sweeps, change)
        if change <= eps:
            converged = True
            break
    if not converged:
        log.warning("best response did not settle within %d sweeps", max_sweeps)
    return _finish(spec, profile, sweeps, converged, eps, history)


def algorithm2(
    spec: GameSpec,
    partition: PartitionScheme,
    init: Optional[Sequence] = None,
    eps: float = DEFAULT_EPS,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> EquilibriumResult:
    """Solve the blocks of ``partition`` in order with :func:`algorithm1`.

    Users of solved blocks stay frozen at their solution and users of later
    blocks stay at ``init`` while a block is being solved.
    """
    sel = spec.throughput
    if sel.kind != "sic_randomized" or sel.alpha.partition != partition:
        raise ProvenanceMismatch("throughput randomization was not built from this partition")
    init = default_init(spec) if init is None else [np.asarray(z, float) for z in init]
    solved = {}
    sweeps = 0
    converged = True
    history = []
    for block in partition.blocks:
        fixed = {
            i: solved.get(i, init[i]) for i in range(spec.n_users) if i not in block
        }
        res = algorithm1(restrict_game(spec, block, fixed), init, eps, max_sweeps)
        for i in block:
            solved[i] = res.measures[i]
        sweeps += res.iterations
        converged = converged and res.converged
        history += res.history
    profile = [solved[i] for i in range(spec.n_users)]
    return _finish(spec, profile, sweeps, converged, eps, history)


def solve(spec: GameSpec, init=None, eps=DEFAULT_EPS, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Algorithm 2 for partition-generated randomizations, Algorithm 1 otherwise."""
    sel = spec.throughput
    if sel.kind == "sic_randomized" and sel.alpha.partition is not None:
        return algorithm2(spec, sel.alpha.partition, init, eps, max_sweeps)
    return algorithm1(spec, init, eps, max_sweeps)


def verify_cne(spec: GameSpec, measures, eps: float = 1e-6) -> CNEReport:
    """Gain of each user's best feasible deviation against the others' measures."""
    gains = []
    for i in range(spec.n_users):
        _, value, reward = _solve_user(spec, i, measures)
        gains.append(value - float(reward @ np.asarray(measures[i])))
    return CNEReport(np.array(gains), eps)


# -- Monte Carlo ----------------------------------------------------------------


@dataclass
class SimulationResult:
    rates: np.ndarray
    power_costs: np.ndarray
    queue_costs: Optional[np.ndarray]
    channel_occupancy: list
    horizon: int
    seed: int


def _cumulative(rows: np.ndarray) -> list:
    cum = np.cumsum(rows, axis=1)
    cum[:, -1] = 1.0
    return cum.tolist()


def _simulate_user(user, policy, horizon, rngs):
    ch_rng, act_rng, arr_rng = rngs
    k_cum = _cumulative(user.channel.transition)
    u_cum = _cumulative(np.asarray(policy, dtype=float))
    ch_u = ch_rng.random(horizon).tolist()
    act_u = act_rng.random(horizon).tolist()
    ks = [0] * horizon
    ls = [0] * horizon
    leff = [0] * horizon
    qs = [0] * horizon
    k = 0
    if user.saturated:
        for n in range(horizon):
            ks[n] = k
            k = bisect.bisect_right(k_cum[k], ch_u[n])
        ks_arr = np.array(ks)
        cum = np.array(u_cum)[ks_arr]
        ls_arr = np.minimum((np.array(act_u)[:, None] >= cum).sum(axis=1), user.l_max)
        return ks_arr, ls_arr, ls_arr, None
    queue = user.queue
    arrivals = arr_rng.choice(len(queue.arrival_pmf), size=horizon, p=queue.arrival_pmf).tolist()
    actions = user.space.actions
    n_q = queue.q_max + 1
    q = 0
    for n in range(horizon):
        ks[n] = k
        qs[n] = q
        a = actions[bisect.bisect_right(u_cum[k * n_q + q], act_u[n])]
        l, d = a
        ls[n] = l
        w = 1 if (q > 0 and l > 0) else 0
        leff[n] = l if q > 0 else 0
        q = min(max(q + d * arrivals[n] - w, 0), queue.q_max)
        k = bisect.bisect_right(k_cum[k], ch_u[n])
    return np.array(ks), np.array(ls), np.array(leff), np.array(qs)


def simulate(spec: GameSpec, policies, horizon: int, seed: int = 0) -> SimulationResult:
    """Slot-level simulation of the multipolicy; returns time averages.

    Every user starts at ``k = 0``, ``q = 0`` and draws its channel moves,
    actions and arrivals from separate streams split off ``seed``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(spec.n_users)
    paths = []
    for user, policy, ss in zip(spec.users, policies, streams):
        rngs = [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3)]
        paths.append(_simulate_user(user, policy, horizon, rngs))
    index = []
    for ks, _, leff, _ in paths:
        index += [ks, leff]
    index = tuple(index)
    rates = np.array([rate_table(spec, i)[index].mean() for i in range(spec.n_users)])
    power = np.array([u.power[ls].mean() for u, (_, ls, _, _) in zip(spec.users, paths)])
    queue = None
    if spec.mode == "unsaturated":
        queue = np.array([qs.mean() for (_, _, _, qs) in paths])
    occupancy = [np.bincount(ks, minlength=u.k_max + 1) / horizon for u, (ks, *_) in zip(spec.users, paths)]
    return SimulationResult(rates, power, queue, occupancy, horizon, seed)

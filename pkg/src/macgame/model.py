"""Users, channels, queues and the per-user controlled Markov kernel.

Every user owns a finite-state Markov channel and, when unsaturated, a finite
buffer with admission control. States are ``(k, q)`` pairs and actions are
``(l, d)`` pairs (power index, admission flag); in the saturated model the
queue coordinates are dropped and states/actions are ``(k,)`` / ``(l,)``.

Flattened (state, action) vectors are always laid out state-major, i.e. the
pair ``(s, a)`` lives at ``s * n_actions + a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional, Sequence

import numpy as np

Mode = Literal["saturated", "unsaturated"]

_STOCH_TOL = 1e-12


def _as_stochastic(matrix, name: str) -> np.ndarray:
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    if (m < 0).any():
        raise ValueError(f"{name} has negative entries")
    if np.abs(m.sum(axis=1) - 1.0).max() > _STOCH_TOL:
        raise ValueError(f"rows of {name} must sum to 1")
    return m


def is_ergodic(transition: np.ndarray) -> bool:
    """True if some power of ``transition`` is strictly positive (primitive chain)."""
    n = transition.shape[0]
    reach = (transition > 0).astype(np.int64)
    power = reach.copy()
    # Wielandt: a primitive n x n matrix has A^k > 0 for k = (n-1)^2 + 1.
    for _ in range((n - 1) ** 2 + 1):
        if power.all():
            return True
        power = np.minimum(power @ reach, 1)
    return bool(power.all())


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique stationary row vector of an irreducible stochastic matrix."""
    n = transition.shape[0]
    a = np.vstack([transition.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Finite-state Markov channel: transition matrix plus gain per index."""

    transition: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        p = _as_stochastic(self.transition, "channel transition")
        g = np.array(self.gain, dtype=float)
        if g.shape != (p.shape[0],):
            raise ValueError("gain must have one entry per channel index")
        if g[0] != 0.0:
            raise ValueError("gain(0) must be exactly 0")
        if (g < 0).any() or (g > 1).any():
            raise ValueError("gain values must lie in [0, 1]")
        if not is_ergodic(p):
            raise ValueError("channel chain is not ergodic")
        p.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "gain", g)

    @property
    def k_max(self) -> int:
        return self.transition.shape[0] - 1

    @cached_property
    def stationary(self) -> np.ndarray:
        return stationary_distribution(self.transition)


def build_bf_fsmc(k_max: int) -> ChannelModel:
    """Birth-death channel: 1/2 hold/move at the ends, 1/3 each way inside.

    Gains are ``k / k_max``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    n = k_max + 1
    p = np.zeros((n, n))
    p[0, 0] = p[0, 1] = 0.5
    p[k_max, k_max] = p[k_max, k_max - 1] = 0.5
    for k in range(1, k_max):
        p[k, k - 1 : k + 2] = 1.0 / 3.0
    return ChannelModel(p, np.arange(n) / k_max)


def truncated_arrival_pmf(rate: float, cutoff: int) -> np.ndarray:
    """Poisson(rate) pmf on ``0..cutoff`` with the tail lumped into ``cutoff``."""
    if rate < 0:
        raise ValueError("arrival rate must be non-negative")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    pmf = np.zeros(cutoff + 1)
    if rate == 0:
        pmf[0] = 1.0
        return pmf
    for g in range(cutoff):
        pmf[g] = math.exp(g * math.log(rate) - rate - math.lgamma(g + 1))
    pmf[cutoff] = max(0.0, 1.0 - pmf[:cutoff].sum())
    return pmf / pmf.sum()


@dataclass(frozen=True, eq=False)
class QueueModel:
    q_max: int
    arrival_pmf: np.ndarray
    arrival_rate: Optional[float] = None

    def __post_init__(self):
        if self.q_max < 1:
            raise ValueError("q_max must be >= 1")
        pmf = np.array(self.arrival_pmf, dtype=float)
        if pmf.ndim != 1 or (pmf < 0).any() or abs(pmf.sum() - 1.0) > _STOCH_TOL:
            raise ValueError("arrival_pmf must be a probability vector")
        pmf.setflags(write=False)
        object.__setattr__(self, "arrival_pmf", pmf)

    @classmethod
    def poisson(cls, q_max: int, rate: float) -> "QueueModel":
        # any cutoff >= q_max is exact under the min(., q_max) clipping
        return cls(q_max, truncated_arrival_pmf(rate, q_max), rate)


def queue_kernel(queue: QueueModel, action: tuple[int, int]) -> np.ndarray:
    """Transition matrix over ``0..q_max`` for a fixed ``(l, d)`` action.

    One packet leaves when the queue is non-empty and ``l > 0``; arrivals are
    admitted only when ``d == 1``; overflow is dropped at ``q_max``.
    """
    l, d = action
    n = queue.q_max + 1
    out = np.zeros((n, n))
    for q in range(n):
        w = 1 if (q > 0 and l > 0) else 0
        if d == 0:
            out[q, max(q - w, 0)] = 1.0
            continue
        for g, prob in enumerate(queue.arrival_pmf):
            out[q, min(max(q + g - w, 0), queue.q_max)] += prob
    return out


@dataclass(frozen=True)
class StateActionSpace:
    """Lexicographic enumeration of one user's states and actions."""

    states: tuple
    actions: tuple
    state_index: dict = field(repr=False)
    action_index: dict = field(repr=False)

    @classmethod
    def build(cls, k_max: int, l_max: int, q_max: Optional[int] = None):
        if q_max is None:
            states = tuple((k,) for k in range(k_max + 1))
            actions = tuple((l,) for l in range(l_max + 1))
        else:
            states = tuple((k, q) for k in range(k_max + 1) for q in range(q_max + 1))
            actions = tuple((l, d) for l in range(l_max + 1) for d in (0, 1))
        return cls(
            states,
            actions,
            {s: i for i, s in enumerate(states)},
            {a: i for i, a in enumerate(actions)},
        )

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def size(self) -> int:
        return self.n_states * self.n_actions

    def pairs(self):
        """Iterate ``(state, action)`` in flattened-vector order."""
        for s in self.states:
            for a in self.actions:
                yield s, a


@dataclass(frozen=True, eq=False)
class UserModel:
    channel: ChannelModel
    power: np.ndarray
    power_budget: float
    queue: Optional[QueueModel] = None
    queue_budget: Optional[float] = None

    def __post_init__(self):
        p = np.array(self.power, dtype=float)
        if p.ndim != 1 or len(p) < 1:
            raise ValueError("power must map every index 0..l_max")
        if p[0] != 0.0:
            raise ValueError("power(0) must be exactly 0")
        if (p < 0).any():
            raise ValueError("power levels must be non-negative")
        if not self.power_budget > 0:
            raise ValueError("power_budget must be positive")
        if (self.queue is None) != (self.queue_budget is None):
            raise ValueError("queue and queue_budget must be given together")
        if self.queue_budget is not None and not self.queue_budget > 0:
            raise ValueError("queue_budget must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "power", p)

    @property
    def saturated(self) -> bool:
        return self.queue is None

    @property
    def k_max(self) -> int:
        return self.channel.k_max

    @property
    def l_max(self) -> int:
        return len(self.power) - 1

    @cached_property
    def space(self) -> StateActionSpace:
        q_max = None if self.queue is None else self.queue.q_max
        return StateActionSpace.build(self.k_max, self.l_max, q_max)

    @cached_property
    def kernel(self) -> np.ndarray:
        """Array ``P[s, a, s']`` of next-state probabilities."""
        sp = self.space
        out = np.empty((sp.n_states, sp.n_actions, sp.n_states))
        for ai, a in enumerate(sp.actions):
            out[:, ai, :] = user_kernel(self, a)
        out.setflags(write=False)
        return out

    @cached_property
    def effective_index(self) -> np.ndarray:
        """Flat ``(k, l_eff)`` index of every (state, action) pair.

        ``l_eff`` is the power index masked to 0 on an empty queue.
        """
        idx = [
            k_eff * (self.l_max + 1) + l_eff
            for k_eff, l_eff in (effective_pair(s, a) for s, a in self.space.pairs())
        ]
        out = np.array(idx, dtype=np.intp)
        out.setflags(write=False)
        return out

    def cost_vector(self, which: int) -> np.ndarray:
        return np.array([instantaneous_cost(self, s, a, which) for s, a in self.space.pairs()])


def effective_pair(state: tuple, action: tuple) -> tuple[int, int]:
    """``(k, l_eff)`` seen by the receiver for one user's (state, action)."""
    k, l = state[0], action[0]
    if len(state) > 1 and state[1] == 0:
        l = 0
    return k, l


def user_kernel(user: UserModel, action: tuple) -> np.ndarray:
    """Transition matrix over the user's states under a fixed action.

    Channel and queue move independently, so the unsaturated kernel is the
    Kronecker product of the channel matrix and the queue kernel.
    """
    if user.saturated:
        return user.channel.transition.copy()
    return np.kron(user.channel.transition, queue_kernel(user.queue, action))


def instantaneous_cost(user: UserModel, state: tuple, action: tuple, which: int) -> float:
    """Power cost (``which=1``, ``p(l)``) or queue cost (``which=2``, ``q``)."""
    if which == 1:
        return float(user.power[action[0]])
    if which == 2:
        if user.saturated:
            raise ValueError("queue cost is undefined for a saturated user")
        return float(state[1])
    raise ValueError(f"unknown cost index {which}")


@dataclass(frozen=True, eq=False)
class GameSpec:
    """An N-user constrained Markov game on a multiple-access channel.

    ``throughput`` is a :class:`macgame.throughput.ThroughputSelector`.
    """

    users: tuple
    noise_power: float
    throughput: object
    mode: Mode = "saturated"

    def __post_init__(self):
        users = tuple(self.users)
        object.__setattr__(self, "users", users)
        if len(users) < 1:
            raise ValueError("a game needs at least one user")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if self.mode not in ("saturated", "unsaturated"):
            raise ValueError(f"unknown mode {self.mode!r}")
        want_saturated = self.mode == "saturated"
        for i, u in enumerate(users):
            if u.saturated != want_saturated:
                raise ValueError(f"user {i} does not match mode {self.mode!r}")
        self.throughput.check(len(users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    def with_throughput(self, throughput) -> "GameSpec":
        return GameSpec(self.users, self.noise_power, throughput, self.mode)


def reference_user(
    saturated: bool = True,
    k_max: int = 3,
    l_max: int = 5,
    q_max: int = 10,
    power_budget: float = 2.0,
    queue_budget: float = 5.0,
    arrival_rate: float = 0.3,
) -> UserModel:
    """BF-FSMC user with ``h = k/k_max`` and ``p = l``; defaults are the reference instance."""
    channel = build_bf_fsmc(k_max)
    power = np.arange(l_max + 1, dtype=float)
    if saturated:
        return UserModel(channel, power, power_budget)
    return UserModel(
        channel, power, power_budget, QueueModel.poisson(q_max, arrival_rate), queue_budget
    )


def reference_game(throughput, saturated: bool = True, n_users: int = 3, **user_kw) -> GameSpec:
    users: Sequence[UserModel] = [reference_user(saturated, **user_kw) for _ in range(n_users)]
    return GameSpec(
        tuple(users), 1.0, throughput, "saturated" if saturated else "unsaturated"
    )

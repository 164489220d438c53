"""Throughput functions of the multiple-access channel and SIC decoding orders.

Users are 0-based positions in ``GameSpec.users``. Permutation numbers ``m``
are 1-based and follow lexicographic order, so for three users ``m=1`` is
``(0, 1, 2)`` and ``m=4`` is ``(1, 2, 0)``.

In a decoding order the last user is decoded first and cancelled; user ``i``
is interfered with only by the users that precede it in the tuple.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

KINDS = ("matched_filter", "sum", "sum_capacity", "sic_endpoint", "sic_randomized")


# -- permutations and partitions ---------------------------------------------


def permutation_by_index(n_users: int, m: int) -> tuple[int, ...]:
    """The ``m``-th (1-based, lexicographic) permutation of ``range(n_users)``."""
    total = math.factorial(n_users)
    if not 1 <= m <= total:
        raise ValueError(f"permutation index {m} outside 1..{total}")
    pool = list(range(n_users))
    rank = m - 1
    out = []
    for pos in range(n_users, 0, -1):
        block = math.factorial(pos - 1)
        out.append(pool.pop(rank // block))
        rank %= block
    return tuple(out)


def permutation_index(perm: Sequence[int]) -> int:
    """Inverse of :func:`permutation_by_index`."""
    pool = sorted(perm)
    if pool != list(range(len(perm))):
        raise ValueError(f"{perm!r} is not a permutation of range({len(perm)})")
    m = 0
    for pos, user in enumerate(perm):
        r = pool.index(user)
        m += r * math.factorial(len(perm) - pos - 1)
        pool.pop(r)
    return m + 1


@dataclass(frozen=True)
class PartitionScheme:
    """Ordered blocks of users; decoding orders keep blocks contiguous in this order."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(u) for u in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        flat = [u for b in blocks for u in b]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"blocks {blocks} do not partition range({len(flat)})")

    @property
    def n_users(self) -> int:
        return sum(len(b) for b in self.blocks)

    @classmethod
    def from_labels(cls, blocks) -> "PartitionScheme":
        """Build from 1-based user labels, e.g. ``[[1], [2, 3]]``."""
        return cls(tuple(tuple(u - 1 for u in b) for b in blocks))

    def labels(self) -> list[list[int]]:
        return [[u + 1 for u in b] for b in self.blocks]


def support_set(partition: PartitionScheme) -> frozenset[int]:
    """Permutation numbers whose order is a concatenation of within-block orders."""
    out = set()
    for parts in itertools.product(*(itertools.permutations(sorted(b)) for b in partition.blocks)):
        out.add(permutation_index([u for part in parts for u in part]))
    return frozenset(out)


@dataclass(frozen=True)
class DecodingRandomization:
    """Probability mass over the ``N!`` decoding orders (index ``m-1`` holds ``alpha(m)``)."""

    mass: tuple
    partition: Optional[PartitionScheme] = None

    def __post_init__(self):
        mass = tuple(self.mass)
        object.__setattr__(self, "mass", mass)
        n = _n_from_factorial(len(mass))
        if any(x < 0 for x in mass) or abs(float(sum(mass)) - 1.0) > 1e-12:
            raise ValueError("decoding randomization must be a probability vector")
        if self.partition is not None:
            if self.partition.n_users != n:
                raise ValueError("partition size does not match randomization length")
            if mass != make_randomization(self.partition).mass:
                raise ValueError("mass does not match the construction for its partition")

    @property
    def n_users(self) -> int:
        return _n_from_factorial(len(self.mass))

    def weights(self) -> np.ndarray:
        return np.array([float(x) for x in self.mass])

    @classmethod
    def point_mass(cls, n_users: int, m: int) -> "DecodingRandomization":
        permutation_by_index(n_users, m)
        mass = [Fraction(0)] * math.factorial(n_users)
        mass[m - 1] = Fraction(1)
        return cls(tuple(mass))


def _n_from_factorial(length: int) -> int:
    n = 1
    while math.factorial(n) < length:
        n += 1
    if math.factorial(n) != length:
        raise ValueError(f"length {length} is not a factorial")
    return n


def make_randomization(partition: PartitionScheme) -> DecodingRandomization:
    """Uniform mass ``1 / prod(|block|!)`` on the support set of ``partition``."""
    n = partition.n_users
    weight = Fraction(1, math.prod(math.factorial(len(b)) for b in partition.blocks))
    support = support_set(partition)
    mass = tuple(weight if m in support else Fraction(0) for m in range(1, math.factorial(n) + 1))
    rnd = DecodingRandomization(mass)
    object.__setattr__(rnd, "partition", partition)
    return rnd


def ordered_partitions(n_users: int):
    """Every ordered set partition of ``range(n_users)`` (13 for three users)."""

    def set_partitions(items):
        if not items:
            yield []
            return
        head, rest = items[0], items[1:]
        for part in set_partitions(rest):
            for j in range(len(part)):
                yield part[:j] + [[head] + part[j]] + part[j + 1 :]
            yield [[head]] + part

    for part in set_partitions(list(range(n_users))):
        for order in itertools.permutations(part):
            yield PartitionScheme(tuple(tuple(sorted(b)) for b in order))


# Ordered blocks for three users, keyed (p_a, p_e) like the published randomization table.
TABLE1_BLOCKS = {
    (1, 1): [[1], [2], [3]],
    (1, 2): [[1], [3], [2]],
    (1, 3): [[2], [1], [3]],
    (1, 4): [[2], [3], [1]],
    (1, 5): [[3], [1], [2]],
    (1, 6): [[3], [2], [1]],
    (2, 1): [[1], [2, 3]],
    (2, 2): [[2, 3], [1]],
    (3, 1): [[2], [1, 3]],
    (3, 2): [[1, 3], [2]],
    (4, 1): [[3], [1, 2]],
    (4, 2): [[1, 2], [3]],
    (5, 1): [[1, 2, 3]],
}


def table1_partition(p_a: int, p_e: int) -> PartitionScheme:
    return PartitionScheme.from_labels(TABLE1_BLOCKS[(p_a, p_e)])


# -- selectors -----------------------------------------------------------------


@dataclass(frozen=True)
class ThroughputSelector:
    kind: str
    m: Optional[int] = None
    alpha: Optional[DecodingRandomization] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown throughput kind {self.kind!r}")
        if self.kind == "sic_endpoint" and self.m is None:
            raise ValueError("sic_endpoint needs a permutation index m")
        if self.kind == "sic_randomized" and self.alpha is None:
            raise ValueError("sic_randomized needs a decoding randomization")

    @classmethod
    def matched_filter(cls):
        return cls("matched_filter")

    @classmethod
    def sum(cls):
        return cls("sum")

    @classmethod
    def sum_capacity(cls):
        return cls("sum_capacity")

    @classmethod
    def sic_endpoint(cls, m: int):
        return cls("sic_endpoint", m=m)

    @classmethod
    def sic_randomized(cls, alpha):
        if isinstance(alpha, PartitionScheme):
            alpha = make_randomization(alpha)
        return cls("sic_randomized", alpha=alpha)

    def check(self, n_users: int) -> None:
        if self.kind == "sic_endpoint":
            permutation_by_index(n_users, self.m)
        if self.kind == "sic_randomized" and self.alpha.n_users != n_users:
            raise ValueError(
                f"randomization over {self.alpha.n_users} users used with {n_users} users"
            )

    @property
    def identical_interest(self) -> bool:
        return self.kind in ("sum", "sum_capacity")


# -- rates -------------------------------------------------------------------
# Core formulas work on received-power arrays ``g`` whose last axis is the
# user axis, so the same code serves scalar calls and full grids.


def _received(spec, k, l_eff) -> np.ndarray:
    return np.array(
        [u.channel.gain[kj] * u.power[lj] for u, kj, lj in zip(spec.users, k, l_eff)]
    )


def _mf(g: np.ndarray, n0: float, i: int) -> np.ndarray:
    total = g.sum(axis=-1)
    return np.log2(1.0 + g[..., i] / (n0 + total - g[..., i]))


def _endpoint(g: np.ndarray, n0: float, perm: Sequence[int], i: int) -> np.ndarray:
    before = list(perm[: list(perm).index(i)])
    interference = g[..., before].sum(axis=-1) if before else 0.0
    return np.log2(1.0 + g[..., i] / (n0 + interference))


def _sum_capacity(g: np.ndarray, n0: float) -> np.ndarray:
    return np.log2(1.0 + g.sum(axis=-1) / n0)


def _randomized(g, n0, alpha: DecodingRandomization, i):
    n = g.shape[-1]
    out = 0.0
    for m, w in enumerate(alpha.weights(), start=1):
        if w:
            out = out + w * _endpoint(g, n0, permutation_by_index(n, m), i)
    return out


def _dispatch(spec, g, i):
    sel = spec.throughput
    n0 = spec.noise_power
    if sel.kind == "matched_filter":
        return _mf(g, n0, i)
    if sel.kind == "sum":
        return sum(_mf(g, n0, j) for j in range(g.shape[-1]))
    if sel.kind == "sum_capacity":
        return _sum_capacity(g, n0)
    if sel.kind == "sic_endpoint":
        return _endpoint(g, n0, permutation_by_index(g.shape[-1], sel.m), i)
    return _randomized(g, n0, sel.alpha, i)


def rate_matched_filter(spec, i, k, l_eff) -> float:
    """Rate of user ``i`` when every other user is treated as noise."""
    return float(_mf(_received(spec, k, l_eff), spec.noise_power, i))


def rate_sic_endpoint(spec, m, i, k, l_eff) -> float:
    perm = permutation_by_index(spec.n_users, m)
    return float(_endpoint(_received(spec, k, l_eff), spec.noise_power, perm, i))


def rate_randomized(spec, alpha, i, k, l_eff) -> float:
    return float(_randomized(_received(spec, k, l_eff), spec.noise_power, alpha, i))


def rate_sum(spec, k, l_eff) -> float:
    g = _received(spec, k, l_eff)
    return float(sum(_mf(g, spec.noise_power, j) for j in range(len(g))))


def rate_sum_capacity(spec, k, l_eff) -> float:
    return float(_sum_capacity(_received(spec, k, l_eff), spec.noise_power))


def rate(spec, i, k, l_eff) -> float:
    """``t_i(k, l_eff)`` for the throughput kind selected in ``spec``."""
    return float(_dispatch(spec, _received(spec, k, l_eff), i))


def received_power_grid(spec) -> np.ndarray:
    """Received powers on the full joint grid.

    Shape is ``(K_1+1, L_1+1, ..., K_N+1, L_N+1, N)``; the axes of user ``j``
    are ``2j`` (channel) and ``2j+1`` (power).
    """
    shape = []
    for u in spec.users:
        shape += [u.k_max + 1, u.l_max + 1]
    n = spec.n_users
    g = np.zeros(shape + [n])
    for j, u in enumerate(spec.users):
        local = np.outer(u.channel.gain, u.power)
        view = [1] * (2 * n)
        view[2 * j], view[2 * j + 1] = local.shape
        g[..., j] = local.reshape(view)
    return g


@lru_cache(maxsize=256)
def rate_table(spec, i: int) -> np.ndarray:
    """``t_i`` on the joint (channel, power) grid laid out as in :func:`received_power_grid`."""
    out = np.asarray(_dispatch(spec, received_power_grid(spec), i), dtype=float)
    out.setflags(write=False)
    return out


# -- potential games -----------------------------------------------------------


def is_exact_potential(n_players, action_sets, payoff_tables, tol: float = 1e-9):
    """Exact-potential test for a finite game in dense form.

    ``payoff_tables`` has shape ``(n_players, |A_1|, ..., |A_N|)``. Every
    pair of players and every unilateral four-cycle (two deviations by ``i``
    and ``j`` with the others held fixed) must have zero payoff circulation.

    Returns ``(True, potential)`` or ``(False, None)``. The potential is
    built by integrating unilateral payoff differences along the path from
    the all-zero profile.
    """
    u = np.asarray(payoff_tables, dtype=float)
    sizes = tuple(len(a) if hasattr(a, "__len__") else int(a) for a in action_sets)
    if u.shape != (n_players,) + sizes:
        raise ValueError(f"payoff tables have shape {u.shape}, expected {(n_players,) + sizes}")
    for i, j in itertools.combinations(range(n_players), 2):
        ui = np.moveaxis(u[i], (i, j), (0, 1))
        uj = np.moveaxis(u[j], (i, j), (0, 1))
        # circulation of (a, b) -> (a2, b) -> (a2, b2) -> (a, b2) -> (a, b),
        # broadcast over axes [a, a2, b, b2, *others]
        cyc = (
            ui[None, :, :, None] - ui[:, None, :, None]
            + uj[None, :, None, :] - uj[None, :, :, None]
            + ui[:, None, None, :] - ui[None, :, None, :]
            + uj[:, None, :, None] - uj[:, None, None, :]
        )
        if cyc.size and np.abs(cyc).max() > tol:
            return False, None
    return True, _integrate_potential(u, n_players)


def _integrate_potential(u: np.ndarray, n: int) -> np.ndarray:
    sizes = u.shape[1:]
    phi = np.zeros(sizes)
    for profile in itertools.product(*(range(s) for s in sizes)):
        total = 0.0
        cur = [0] * n
        for i in range(n):
            prev = tuple(cur)
            cur[i] = profile[i]
            total += u[i][tuple(cur)] - u[i][prev]
        phi[profile] = total
    return phi


def channel_slice_game(spec, k: Sequence[int]) -> np.ndarray:
    """Payoff tables ``t_i(k, .)`` of the one-shot power game at channel tuple ``k``."""
    index = []
    for kj in k:
        index += [kj, slice(None)]
    return np.stack([rate_table(spec, i)[tuple(index)] for i in range(spec.n_users)])

"""Brute-force ground truth for tiny instances.

Vertices of a polytope are found by trying every basis-sized column subset
of its standard form, so none of this touches the simplex code.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .lp import Polytope, build_polytope, reward_vector

MAX_VARS = 20


class TooLarge(ValueError):
    """Instance exceeds the enumeration cap."""


@dataclass
class VertexSet:
    vertices: np.ndarray  # (n_vertices, n_vars)
    bases: list  # column subsets of the standard form that produced each vertex

    def __len__(self):
        return len(self.vertices)


def _independent_rows(a: np.ndarray, b: np.ndarray):
    keep = []
    for r in range(a.shape[0]):
        trial = keep + [r]
        if np.linalg.matrix_rank(a[trial], tol=1e-10) == len(trial):
            keep = trial
    return a[keep], b[keep]


def enumerate_vertices(polytope: Polytope, cap: int = MAX_VARS, tol: float = 1e-9) -> VertexSet:
    """All distinct basic feasible solutions of ``polytope``."""
    n = polytope.n_vars
    if n > cap:
        raise TooLarge(f"{n} variables exceeds the enumeration cap of {cap}")
    m_ub = polytope.ub_lhs.shape[0]
    a = np.block(
        [
            [polytope.eq_lhs, np.zeros((polytope.eq_lhs.shape[0], m_ub))],
            [polytope.ub_lhs, np.eye(m_ub)],
        ]
    )
    b = np.concatenate([polytope.eq_rhs, polytope.ub_rhs])
    a, b = _independent_rows(a, b)
    rank = a.shape[0]
    found, bases = [], []
    for cols in itertools.combinations(range(a.shape[1]), rank):
        sub = a[:, cols]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        xb = np.linalg.solve(sub, b)
        if xb.min() < -tol:
            continue
        x = np.zeros(a.shape[1])
        x[list(cols)] = xb
        z = x[:n]
        z[np.abs(z) < tol] = 0.0
        if any(np.abs(z - v).max() <= tol for v in found):
            continue
        found.append(z)
        bases.append(cols)
    return VertexSet(np.array(found).reshape(-1, n), bases)


def oracle_best_response(reward, vertices: VertexSet):
    """``(index, vertex, value)`` maximising ``reward @ v``; ties go to the lowest index."""
    if len(vertices) == 0:
        raise ValueError("empty vertex set")
    values = vertices.vertices @ np.asarray(reward, dtype=float)
    best = values.max()
    idx = int(np.flatnonzero(values >= best - 1e-12)[0])
    return idx, vertices.vertices[idx], float(values[idx])


def deviation_gains(spec, measures, cap: int = MAX_VARS) -> np.ndarray:
    """Per-user gain of the best vertex deviation over the current rate."""
    gains = []
    for i, user in enumerate(spec.users):
        verts = enumerate_vertices(build_polytope(user), cap)
        reward = reward_vector(spec, i, measures)
        _, _, best = oracle_best_response(reward, verts)
        gains.append(best - float(reward @ np.asarray(measures[i])))
    return np.array(gains)


def exhaustive_equilibrium_check(spec, measures, tol: float = 1e-9, cap: int = MAX_VARS) -> bool:
    """No user can gain more than ``tol`` by switching to any vertex of its polytope.

    Vertices suffice because a linear payoff is maximised at a vertex.
    """
    return bool((deviation_gains(spec, measures, cap) <= tol).all())


def max_vertex_count(n_vars: int, rank: int) -> int:
    """Upper bound on basic solutions of a rank-``rank`` system in ``n_vars`` columns."""
    return math.comb(n_vars, rank)


def tiny_game(throughput=None):
    """The pinned tiny instance: two saturated users, gains {0, 1}, powers {0, 1}, budget 0.5."""
    from .model import GameSpec, UserModel, build_bf_fsmc
    from .throughput import ThroughputSelector

    throughput = throughput or ThroughputSelector.matched_filter()
    users = tuple(UserModel(build_bf_fsmc(1), np.array([0.0, 1.0]), 0.5) for _ in range(2))
    return GameSpec(users, 1.0, throughput, "saturated")

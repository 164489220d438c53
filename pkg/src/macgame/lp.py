"""Occupation-measure linear programs.

A user's stationary behaviour is represented by its occupation measure
``z[s * n_actions + a]``, the long-run probability of being in state ``s`` and
playing action ``a``. Rates and costs are linear in ``z`` and the feasible
measures form a polytope, so a best response is an LP.

The LP solver is a dense two-phase tableau simplex with Bland's rule.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import UserModel, stationary_distribution
from .throughput import rate_table

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
OPT_TOL = 1e-10


class LPInfeasible(Exception):
    """The constraint system has no feasible point."""


class LPUnbounded(Exception):
    pass


class NotUnichain(Exception):
    """A policy induces a chain without a unique stationary distribution."""


@dataclass
class LinearProgram:
    """maximize ``objective @ z`` s.t. ``eq_lhs @ z == eq_rhs``, ``ub_lhs @ z <= ub_rhs``, ``z >= 0``."""

    objective: np.ndarray
    eq_lhs: np.ndarray
    eq_rhs: np.ndarray
    ub_lhs: np.ndarray
    ub_rhs: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.shape[0]
        self.eq_lhs = np.asarray(self.eq_lhs, dtype=float).reshape(-1, n)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        self.ub_lhs = np.asarray(self.ub_lhs, dtype=float).reshape(-1, n)
        self.ub_rhs = np.asarray(self.ub_rhs, dtype=float).reshape(-1)
        if self.eq_lhs.shape[0] != self.eq_rhs.shape[0] or self.ub_lhs.shape[0] != self.ub_rhs.shape[0]:
            raise ValueError("constraint rows and right-hand sides disagree")
        if not (np.isfinite(self.eq_rhs).all() and np.isfinite(self.ub_rhs).all()):
            raise ValueError("right-hand sides must be finite")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass
class LPSolution:
    x: np.ndarray
    value: float
    basis: tuple
    # c_B B^-1 A_j - c_j over structural and slack columns; >= 0 at a maximum
    reduced_costs: np.ndarray = field(repr=False)
    pivots: int = 0


def simplex_solve(lp: LinearProgram, tol: float = OPT_TOL) -> LPSolution:
    """Solve ``lp`` to an optimal basic feasible solution.

    Revised two-phase simplex: every iteration re-solves with the current
    basis matrix, so round-off does not accumulate across pivots. Entering
    and leaving variables follow Bland's rule.

    Raises :class:`LPInfeasible` or :class:`LPUnbounded`.
    """
    n = lp.n_vars
    m_eq, m_ub = lp.eq_lhs.shape[0], lp.ub_lhs.shape[0]
    m = m_eq + m_ub
    n_struct = n + m_ub  # structural + slack columns

    a = np.zeros((m, n_struct))
    a[:m_eq, :n] = lp.eq_lhs
    a[m_eq:, :n] = lp.ub_lhs
    a[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([lp.eq_rhs, lp.ub_rhs])
    flip = b < 0
    a[flip] *= -1
    b[flip] *= -1

    # initial basis: slacks of ub rows with b >= 0, artificials elsewhere
    art_rows = [r for r in range(m) if r < m_eq or flip[r]]
    n_art = len(art_rows)
    full = np.hstack([a, np.zeros((m, n_art))])
    basis = [n + (r - m_eq) if r >= m_eq and not flip[r] else -1 for r in range(m)]
    for j, r in enumerate(art_rows):
        full[r, n_struct + j] = 1.0
        basis[r] = n_struct + j

    pivots = 0
    if n_art:
        cost1 = np.zeros(n_struct + n_art)
        cost1[n_struct:] = -1.0
        basis, steps = _run(full, b, cost1, basis, n_struct + n_art, tol)
        pivots += steps
        x_b = _solve(full, basis, b)
        infeas = x_b[np.array(basis) >= n_struct].sum()
        if infeas > 1e-9:
            raise LPInfeasible(f"phase 1 ended with infeasibility {infeas:.3g}")
        full, b, basis = _drive_out_artificials(full, b, basis, n_struct)
        full = full[:, :n_struct]

    cost = np.zeros(n_struct)
    cost[:n] = lp.objective
    basis, steps = _run(full, b, cost, basis, n_struct, tol)
    pivots += steps

    x_full = np.zeros(n_struct)
    x_full[basis] = _solve(full, basis, b)
    x_full[np.abs(x_full) < 1e-13] = 0.0
    y = np.linalg.solve(full[:, basis].T, cost[basis])
    reduced = y @ full - cost
    x = x_full[:n].copy()
    return LPSolution(x, float(lp.objective @ x), tuple(basis), reduced, pivots)


def _solve(mat, basis, rhs):
    return np.linalg.solve(mat[:, basis], rhs)


def _run(mat, b, cost, basis, n_cols, tol):
    """Primal simplex from a feasible basis until optimal.

    Entering column: lowest index with positive reduced cost (Bland). Leaving
    row: two-pass Harris ratio test preferring the largest pivot among
    near-ties, which keeps bases well conditioned when the constraint matrix
    carries tiny transition probabilities. If a basis repeats, leaving rows
    fall back to strict Bland (lowest basic index among exact ties), which
    cannot cycle.
    """
    basis = list(basis)
    steps = 0
    strict = False
    seen = set()
    while True:
        bmat = mat[:, basis]
        x_b = np.clip(np.linalg.solve(bmat, b), 0.0, None)
        y = np.linalg.solve(bmat.T, cost[basis])
        # reduced cost of a maximisation: c_j - c_B B^-1 A_j
        d = cost[:n_cols] - y @ mat[:, :n_cols]
        d[basis] = 0.0
        candidates = np.flatnonzero(d > tol)
        if candidates.size == 0:
            return basis, steps
        j = int(candidates[0])
        w = np.linalg.solve(bmat, mat[:, j])
        rows = np.flatnonzero(w > PIVOT_TOL)
        if rows.size == 0:
            raise LPUnbounded(f"column {j} is an unbounded ray")
        ratios = x_b[rows] / w[rows]
        if strict:
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda row: basis[row]))
        else:
            theta = ((x_b[rows] + FEAS_TOL) / w[rows]).min()
            ok = rows[ratios <= theta]
            r = int(ok[np.argmax(w[ok])])
        basis[r] = j
        steps += 1
        key = frozenset(basis)
        if key in seen and not strict:
            log.debug("basis repeated after %d pivots; switching to strict Bland", steps)
            strict = True
        seen.add(key)


def _drive_out_artificials(mat, b, basis, n_struct):
    """Swap zero-level artificials for structural columns; drop redundant rows."""
    basis = list(basis)
    r = 0
    while r < len(basis):
        if basis[r] >= n_struct:
            bmat = mat[:, basis]
            row = np.linalg.solve(bmat, mat[:, :n_struct])[r]
            row[[c for c in basis if c < n_struct]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-9:
                basis[r] = j
            else:
                # redundant equality: remove the row and its artificial
                mat = np.delete(mat, r, axis=0)
                b = np.delete(b, r)
                del basis[r]
                continue
        r += 1
    return mat, b, basis


# -- occupation polytope -------------------------------------------------------


@dataclass(eq=False)
class Polytope:
    """Feasible occupation measures of one user.

    Rows of ``eq_lhs``: one balance equation per state, then normalisation.
    Rows of ``ub_lhs``: power budget, then queue budget when unsaturated.
    """

    eq_lhs: np.ndarray
    eq_rhs: np.ndarray
    ub_lhs: np.ndarray
    ub_rhs: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.eq_lhs.shape[1]

    def lp(self, objective) -> LinearProgram:
        return LinearProgram(objective, self.eq_lhs, self.eq_rhs, self.ub_lhs, self.ub_rhs)

    def residual(self, z) -> float:
        """Largest constraint violation of ``z`` (0 when feasible)."""
        z = np.asarray(z, dtype=float)
        eq = np.abs(self.eq_lhs @ z - self.eq_rhs).max(initial=0.0)
        ub = np.max(self.ub_lhs @ z - self.ub_rhs, initial=0.0)
        return float(max(eq, ub, -z.min(initial=0.0)))


@lru_cache(maxsize=None)
def build_polytope(user: UserModel, mode: Optional[str] = None) -> Polytope:
    """Balance, budget, normalisation and sign constraints for ``user``."""
    saturated = user.saturated if mode is None else mode == "saturated"
    if saturated != user.saturated:
        raise ValueError(f"user is incompatible with mode {mode!r}")
    sp = user.space
    kernel = user.kernel  # [s, a, s']
    n_s, n_a = sp.n_states, sp.n_actions
    # balance: sum_a z(y, a) - sum_{s,a} P(y | s, a) z(s, a) = 0 for every y
    flow = kernel.reshape(n_s * n_a, n_s).T
    own = np.repeat(np.eye(n_s), n_a, axis=1)
    eq_lhs = np.vstack([own - flow, np.ones((1, n_s * n_a))])
    eq_rhs = np.zeros(n_s + 1)
    eq_rhs[-1] = 1.0
    ub_rows = [user.cost_vector(1)]
    ub_rhs = [user.power_budget]
    if not saturated:
        ub_rows.append(user.cost_vector(2))
        ub_rhs.append(user.queue_budget)
    return Polytope(eq_lhs, eq_rhs, np.array(ub_rows), np.array(ub_rhs, dtype=float))


def feasible_vertex(user: UserModel) -> np.ndarray:
    """Deterministic phase-1 vertex of the user's polytope."""
    poly = build_polytope(user)
    return clean_measure(simplex_solve(poly.lp(np.zeros(poly.n_vars))).x)


def idle_measure(user: UserModel) -> np.ndarray:
    """Never transmit and never admit: the queue stays empty, zero cost."""
    sp = user.space
    pi = user.channel.stationary
    z = np.zeros((sp.n_states, sp.n_actions))
    idle = sp.action_index[(0,) if user.saturated else (0, 0)]
    for s_i, s in enumerate(sp.states):
        if user.saturated or s[1] == 0:
            z[s_i, idle] = pi[s[0]]
    return z.ravel()


def clean_measure(z, tol: float = 1e-12) -> np.ndarray:
    """Clamp round-off negatives and renormalise."""
    z = np.array(z, dtype=float)
    if z.min(initial=0.0) < -1e-9:
        raise ValueError(f"occupation measure has entry {z.min():.3g} < 0")
    z[z < tol] = 0.0
    return z / z.sum()


# -- rewards, policies and evaluation -----------------------------------------


def marginal(user: UserModel, z) -> np.ndarray:
    """Law of ``(k, l_eff)`` under ``z`` as a ``(k_max+1, l_max+1)`` table."""
    size = (user.k_max + 1) * (user.l_max + 1)
    flat = np.bincount(user.effective_index, weights=np.asarray(z, dtype=float), minlength=size)
    return flat.reshape(user.k_max + 1, user.l_max + 1)


def reward_vector(spec, i: int, profile) -> np.ndarray:
    """Expected immediate rate of user ``i`` for each of its (state, action) pairs.

    ``profile`` holds one occupation measure per user; entry ``i`` is ignored.
    Opponents enter only through their ``(k, l_eff)`` marginals since the
    rate depends on nothing else.
    """
    table = np.asarray(rate_table(spec, i))
    n = spec.n_users
    # contract opponents from the last user backwards so axis positions hold
    for j in range(n - 1, -1, -1):
        if j == i:
            continue
        mu = marginal(spec.users[j], profile[j])
        table = np.tensordot(table, mu, axes=([2 * j, 2 * j + 1], [0, 1]))
    return table.ravel()[spec.users[i].effective_index]


def evaluate(z, reward, user: UserModel):
    """``(rate, power_cost, queue_cost)``; the queue cost is ``None`` when saturated."""
    z = np.asarray(z, dtype=float)
    rate = float(np.dot(reward, z))
    c1 = float(user.cost_vector(1) @ z)
    c2 = None if user.saturated else float(user.cost_vector(2) @ z)
    return rate, c1, c2


def occupation_to_policy(z, user_or_space) -> np.ndarray:
    """Conditional action law ``u[s, a]``; uniform on states with no mass."""
    sp = getattr(user_or_space, "space", user_or_space)
    zz = np.asarray(z, dtype=float).reshape(sp.n_states, sp.n_actions)
    zz = np.where(zz > -1e-12, np.clip(zz, 0.0, None), zz)
    tot = zz.sum(axis=1, keepdims=True)
    uniform = np.full_like(zz, 1.0 / sp.n_actions)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(tot > 1e-12, zz / np.where(tot > 0, tot, 1.0), uniform)
    return u


def policy_kernel(user: UserModel, policy) -> np.ndarray:
    u = np.asarray(policy, dtype=float)
    return np.einsum("sa,sat->st", u, user.kernel)


def policy_to_occupation(user: UserModel, policy) -> np.ndarray:
    """``z(s, a) = pi(s) u(a | s)`` with ``pi`` stationary for the induced chain."""
    u = np.asarray(policy, dtype=float)
    p = policy_kernel(user, u)
    n = p.shape[0]
    if np.linalg.matrix_rank(p.T - np.eye(n), tol=1e-10) < n - 1:
        raise NotUnichain("policy induces more than one recurrent class")
    pi = stationary_distribution(p)
    return (pi[:, None] * u).ravel()


def is_vertex(z, polytope: Polytope, tol: float = 1e-9) -> bool:
    """True iff ``z`` is a basic feasible solution of ``polytope``."""
    z = np.asarray(z, dtype=float)
    if polytope.residual(z) > 1e-7:
        return False
    active_ub = np.abs(polytope.ub_lhs @ z - polytope.ub_rhs) <= tol
    at_zero = np.abs(z) <= tol
    rows = np.vstack(
        [polytope.eq_lhs, polytope.ub_lhs[active_ub], np.eye(len(z))[at_zero]]
    )
    return int(np.linalg.matrix_rank(rows, tol=1e-8)) == len(z)

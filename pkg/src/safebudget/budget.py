"""Minimal damage budget ``k*`` and the feasibility queries derived from it.

Budget values live in a float array so that ``math.inf`` gives saturating
arithmetic for free; finite entries are always small integers and compare
exactly.
"""
import enum
import json
import math

import numpy as np

from .errors import DimensionMismatch, InvalidParameter

INF = math.inf


class Barrier(enum.Enum):
    SAFE = 0
    UNSAFE = -math.inf


def budget_cap(n_states):
    """``K_max``: finite minimal budgets never exceed ``n_states``."""
    return n_states + 1


class BudgetTable:
    """Budget per ``(state, action)``; entries are naturals or ``INF``."""

    def __init__(self, values, states, actions, fingerprint=None, sweeps=None):
        values = np.array(values, dtype=float)
        if values.shape != (len(states), len(actions)):
            raise DimensionMismatch((len(states), len(actions)), values.shape)
        finite = values[np.isfinite(values)]
        if np.any(finite < 0) or np.any(finite != np.round(finite)) or np.any(np.isnan(values)):
            raise ValueError("budget entries must be naturals or inf")
        values.setflags(write=False)
        self.values = values
        self.states = tuple(states)
        self.actions = tuple(actions)
        self.fingerprint = fingerprint
        self.sweeps = sweeps

    @classmethod
    def zeros(cls, mdp):
        return cls(np.zeros(mdp.shape), mdp.states, mdp.actions, mdp.fingerprint())

    @classmethod
    def like(cls, mdp, values):
        return cls(values, mdp.states, mdp.actions, mdp.fingerprint())

    @property
    def shape(self):
        return self.values.shape

    @property
    def k_max(self):
        return budget_cap(len(self.states))

    def __getitem__(self, key):
        v = self.values[key]
        if np.ndim(v) == 0:
            return INF if math.isinf(v) else int(v)
        return v

    def __eq__(self, other):
        if not isinstance(other, BudgetTable):
            return NotImplemented
        return (self.states == other.states and self.actions == other.actions
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __le__(self, other):
        return bool(np.all(self.values <= other.values))

    def __repr__(self):
        return f"BudgetTable({self.to_dict()})"

    def to_dict(self):
        out = {}
        for s, sname in enumerate(self.states):
            for a, aname in enumerate(self.actions):
                v = self[s, a]
                out[f"{sname}/{aname}"] = "inf" if v == INF else v
        return out

    @classmethod
    def from_dict(cls, data, states, actions):
        values = np.zeros((len(states), len(actions)))
        for s, sname in enumerate(states):
            for a, aname in enumerate(actions):
                v = data[f"{sname}/{aname}"]
                values[s, a] = INF if v == "inf" else int(v)
        return cls(values, states, actions)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_dims(mdp, k):
    if k.shape != mdp.shape:
        raise DimensionMismatch(mdp.shape, k.shape)


def _apply(support_mask, damage_mask, values, k_max=None):
    best = values.min(axis=1)                       # min over a' for every s'
    cand = damage_mask + best[None, None, :]        # 1_d(s,a,s') + min_a' k(s',a')
    out = np.where(support_mask, cand, -np.inf).max(axis=2)
    if k_max is not None:
        out[out > k_max] = INF
    return out


def apply_budget_operator(mdp, k, cap=True):
    """One synchronous application of the budget operator to ``k``.

    With ``cap`` (the default) results above ``K_max`` saturate to ``INF``.
    """
    _check_dims(mdp, k)
    k_max = budget_cap(mdp.n_states) if cap else None
    return BudgetTable.like(mdp, _apply(mdp.support_mask, mdp.damage_mask, k.values, k_max))


def iterate_budgets(mdp):
    """Yield ``k_0 = 0, k_1, k_2, ...`` until two consecutive iterates agree.

    Entries reaching ``K_max`` are replaced by ``INF``. The final fixed
    point is yielded once.
    """
    k_max = budget_cap(mdp.n_states)
    # each non-final sweep raises some entry by >= 1 or pins it to INF
    limit = mdp.n_states * mdp.n_actions * (k_max + 1) + 1
    current = np.zeros(mdp.shape)
    yield current.copy()
    for _ in range(limit):
        nxt = _apply(mdp.support_mask, mdp.damage_mask, current)
        nxt[nxt >= k_max] = INF
        if np.array_equal(nxt, current):
            return
        current = nxt
        yield current.copy()
    raise RuntimeError("budget iteration failed to reach a fixed point")  # pragma: no cover


def solve_minimal_budget(mdp):
    """Fixed-point budget iteration from the all-zero table.

    ``table.sweeps`` holds the number of operator applications, including
    the final one that confirmed the fixed point.
    """
    sweeps = 0
    for values in iterate_budgets(mdp):
        sweeps += 1
    table = BudgetTable.like(mdp, values)
    table.sweeps = sweeps
    return table


def _check_index(k_star, s, a=None):
    n_s, n_a = k_star.shape
    if not 0 <= s < n_s or (a is not None and not 0 <= a < n_a):
        raise DimensionMismatch((n_s, n_a), (s, a))


def barrier(k_star, s, k, a):
    """SAFE iff budget ``k`` covers ``k*(s, a)``."""
    _check_index(k_star, s, a)
    if k < 0:
        raise InvalidParameter("k", k, "budget must be >= 0")
    return Barrier.SAFE if k >= k_star.values[s, a] else Barrier.UNSAFE


def feasible_actions(k_star, s, k):
    _check_index(k_star, s)
    return {int(a) for a in np.flatnonzero(k_star.values[s] <= k)}


def unsafe_states(k_star, delta):
    """States where every action needs more than ``delta`` budget."""
    return {int(s) for s in np.flatnonzero(np.all(k_star.values > delta, axis=1))}


def greedy_actions(k_star):
    """``argmin_a k*(s, a)`` per state, ties to the lowest action index."""
    return np.argmin(k_star.values, axis=1)


def safety_game_oracle(mdp, k_max=None):
    """Independent ``k*`` via the winning region of a safety game.

    Works on the product of states and budgets ``0..k_max`` and the raw
    kernel entries ``(s_next, d)``; ``(s, k, a)`` is safe when every
    positive-probability entry keeps ``k - d >= 0`` and lands inside the
    winning region. ``k_max`` defaults to ``n_states``, the largest
    possible finite budget.
    """
    if k_max is None:
        k_max = mdp.n_states
    if k_max < 1:
        raise InvalidParameter("k_max", k_max, "must be >= 1")
    n_s, n_a = mdp.shape
    entries = [[mdp.entries(s, a) for a in range(n_a)] for s in range(n_s)]

    def action_safe(win, s, k, a):
        for sp, d, _, _ in entries[s][a]:
            if k - d < 0 or not win[sp][k - d]:
                return False
        return True

    win = [[True] * (k_max + 1) for _ in range(n_s)]
    changed = True
    while changed:
        changed = False
        for s in range(n_s):
            for k in range(k_max + 1):
                if win[s][k] and not any(action_safe(win, s, k, a) for a in range(n_a)):
                    win[s][k] = False
                    changed = True

    values = np.full((n_s, n_a), INF)
    for s in range(n_s):
        for a in range(n_a):
            for k in range(k_max + 1):
                if action_safe(win, s, k, a):
                    values[s, a] = k
                    break
    return BudgetTable.like(mdp, values)

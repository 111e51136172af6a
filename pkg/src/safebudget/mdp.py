"""Finite tabular MDPs with a binary damage signal.

A model is stored densely: ``prob[s, a, s_next, d]`` is the joint
probability of moving to ``s_next`` with damage bit ``d`` and
``reward[s, a, s_next, d]`` the deterministic reward of that transition.
The terminal state's absorbing self-loop is always materialized.
"""
import hashlib
import json
import math
from collections import deque
from typing import NamedTuple

import numpy as np

from .errors import (
    DuplicateEntry,
    InvalidParameter,
    InvalidProbability,
    ModelError,
    ProbabilityNotNormalized,
    TerminalNotAbsorbing,
    TerminalUnreachable,
    UnknownIdentifier,
)

NORMALIZATION_TOL = 1e-9
MIN_PROBABILITY = 1e-12


class SupportEntry(NamedTuple):
    s_prime: int
    damage_possible: bool
    prob_mass: float


class Mdp:
    """Validated, immutable tabular MDP.

    Build one with :func:`validate_mdp` (or a builder such as
    :func:`chain_mdp`); the constructor itself performs no checks.
    """

    def __init__(self, states, actions, terminal, prob, reward, start=0):
        self.states = tuple(states)
        self.actions = tuple(actions)
        self.terminal = int(terminal)
        self.start = int(start)
        prob = np.array(prob, dtype=float)
        reward = np.array(reward, dtype=float)
        prob.setflags(write=False)
        reward.setflags(write=False)
        self.prob = prob
        self.reward = reward
        self._state_index = {name: i for i, name in enumerate(self.states)}
        self._action_index = {name: i for i, name in enumerate(self.actions)}

        support = prob.sum(axis=3) > 0
        damage = prob[..., 1] > 0
        support.setflags(write=False)
        damage.setflags(write=False)
        self.support_mask = support
        self.damage_mask = damage

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def shape(self):
        return (self.n_states, self.n_actions)

    def state_index(self, name):
        try:
            return self._state_index[name]
        except KeyError:
            raise UnknownIdentifier(name) from None

    def action_index(self, name):
        try:
            return self._action_index[name]
        except KeyError:
            raise UnknownIdentifier(name) from None

    def entries(self, s, a):
        """Kernel entries ``(s_next, d, prob, reward)`` of ``(s, a)``, sorted."""
        nz = np.argwhere(self.prob[s, a] > 0)
        return [
            (int(sp), int(d), float(self.prob[s, a, sp, d]), float(self.reward[s, a, sp, d]))
            for sp, d in nz
        ]

    def expected_reward(self):
        """Expected one-step reward per ``(s, a)``."""
        return np.einsum("ijkl,ijkl->ij", self.prob, self.reward)

    def to_dict(self):
        transitions = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                for sp, d, p, r in self.entries(s, a):
                    transitions.append({
                        "s": self.states[s], "a": self.actions[a],
                        "s_next": self.states[sp], "d": d, "p": p, "r": r,
                    })
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "terminal": self.states[self.terminal],
            "start": self.states[self.start],
            "transitions": transitions,
        }

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.terminal == other.terminal
            and self.start == other.start
            and np.array_equal(self.prob, other.prob)
            and np.array_equal(self.reward, other.reward)
        )

    __hash__ = None

    def __repr__(self):
        return (f"Mdp(n_states={self.n_states}, n_actions={self.n_actions}, "
                f"terminal={self.states[self.terminal]!r})")


def support(mdp, s, a):
    """Successor states of ``(s, a)`` with positive mass, sorted by index."""
    out = []
    for sp in np.flatnonzero(mdp.support_mask[s, a]):
        out.append(SupportEntry(int(sp), bool(mdp.damage_mask[s, a, sp]),
                                float(mdp.prob[s, a, sp].sum())))
    return out


def _unreachable_states(support_mask, terminal):
    # Backward search from the terminal over the union of all actions' supports.
    n = support_mask.shape[0]
    can_reach = support_mask.any(axis=1)  # (s, s_next)
    seen = np.zeros(n, dtype=bool)
    seen[terminal] = True
    queue = deque([terminal])
    while queue:
        t = queue.popleft()
        for s in np.flatnonzero(can_reach[:, t] & ~seen):
            seen[s] = True
            queue.append(s)
    return [int(s) for s in np.flatnonzero(~seen)]


def build_mdp(states, actions, terminal, prob, reward, start=0, check_reachability=True):
    """Check the structural invariants of dense arrays and wrap them."""
    prob = np.asarray(prob, dtype=float)
    n_s, n_a = len(states), len(actions)
    if prob.shape != (n_s, n_a, n_s, 2):
        raise ModelError(f"kernel has shape {prob.shape}, expected {(n_s, n_a, n_s, 2)}")
    for a in range(n_a):
        row = prob[terminal, a]
        if row[terminal, 0] != 1.0 or np.count_nonzero(row) != 1 or reward[terminal, a, terminal, 0] != 0:
            raise TerminalNotAbsorbing(states[terminal], actions[a])
    totals = prob.sum(axis=(2, 3))
    for s in range(n_s):
        if s == terminal:
            continue
        for a in range(n_a):
            if abs(totals[s, a] - 1.0) > NORMALIZATION_TOL:
                raise ProbabilityNotNormalized(states[s], actions[a], float(totals[s, a]))
    mdp = Mdp(states, actions, terminal, prob, reward, start=start)
    if check_reachability:
        stuck = _unreachable_states(mdp.support_mask, mdp.terminal)
        if stuck:
            raise TerminalUnreachable(states[stuck[0]])
    return mdp


def validate_mdp(raw, mu=None):
    """Parse a raw model description (the JSON file schema) into an :class:`Mdp`.

    ``mu``, when given, is a support floor: every listed probability must
    be at least ``mu``.
    """
    try:
        states = list(raw["states"])
        actions = list(raw["actions"])
        terminal_name = raw["terminal"]
        transitions = raw["transitions"]
    except (KeyError, TypeError) as exc:
        raise ModelError(f"model description is missing field {exc}") from None
    if not states or not actions:
        raise ModelError("a model needs at least one state and one action")
    for kind, names in (("state", states), ("action", actions)):
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate {kind} identifiers")
        if not all(isinstance(n, str) for n in names):
            raise ModelError(f"{kind} identifiers must be strings")
    s_idx = {n: i for i, n in enumerate(states)}
    a_idx = {n: i for i, n in enumerate(actions)}

    def lookup(table, name):
        if name not in table:
            raise UnknownIdentifier(name)
        return table[name]

    terminal = lookup(s_idx, terminal_name)
    start = lookup(s_idx, raw.get("start", states[0]))
    n_s, n_a = len(states), len(actions)
    prob = np.zeros((n_s, n_a, n_s, 2))
    reward = np.zeros((n_s, n_a, n_s, 2))
    seen = set()
    for t in transitions:
        try:
            s, a, sp = lookup(s_idx, t["s"]), lookup(a_idx, t["a"]), lookup(s_idx, t["s_next"])
            d, p, r = t["d"], t["p"], t["r"]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"transition {t!r} is missing field {exc}") from None
        if d not in (0, 1) or isinstance(d, bool):
            raise ModelError(f"damage bit must be 0 or 1, got {d!r}")
        if (s, a, sp, d) in seen:
            raise DuplicateEntry(t["s"], t["a"], t["s_next"], d)
        seen.add((s, a, sp, d))
        p, r = float(p), float(r)
        if not (0.0 < p <= 1.0 + NORMALIZATION_TOL) or math.isnan(p):
            raise InvalidProbability(p)
        if p < MIN_PROBABILITY:
            raise InvalidProbability(p, f"below the minimum {MIN_PROBABILITY}")
        if mu is not None and p < mu:
            raise InvalidProbability(p, f"below the support floor {mu}")
        if not math.isfinite(r):
            raise ModelError(f"reward must be finite, got {r!r}")
        prob[s, a, sp, d] = p
        reward[s, a, sp, d] = r

    for a in range(n_a):
        row = prob[terminal, a]
        if not row.any():
            row[terminal, 0] = 1.0
        elif (np.count_nonzero(row) != 1 or abs(row[terminal, 0] - 1.0) > NORMALIZATION_TOL
              or reward[terminal, a, terminal, 0] != 0):
            raise TerminalNotAbsorbing(terminal_name, actions[a])
        else:
            row[terminal, 0] = 1.0
    return build_mdp(states, actions, terminal, prob, reward, start=start)


def load_mdp(path, mu=None):
    with open(path) as fh:
        return validate_mdp(json.load(fh), mu=mu)


def save_mdp(mdp, path):
    with open(path, "w") as fh:
        json.dump(mdp.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def chain_mdp(p_damage=1.0):
    """Two-state chain: ``left`` loops at ``circle`` earning +1 and damage
    with probability ``p_damage``; ``right`` ends the episode."""
    if not (0.0 < p_damage <= 1.0):
        raise InvalidProbability(p_damage)
    transitions = [
        {"s": "circle", "a": "left", "s_next": "circle", "d": 1, "p": p_damage, "r": 1.0},
        {"s": "circle", "a": "right", "s_next": "square", "d": 0, "p": 1.0, "r": 0.0},
    ]
    if p_damage < 1.0:
        transitions.append(
            {"s": "circle", "a": "left", "s_next": "circle", "d": 0, "p": 1.0 - p_damage, "r": 1.0})
    return validate_mdp({
        "states": ["circle", "square"],
        "actions": ["left", "right"],
        "terminal": "square",
        "start": "circle",
        "transitions": transitions,
    })


def random_mdp(n_states, n_actions, seed, floor=0.1, damage_rate=0.3, max_entries=4,
               exit_prob=None, reward_range=(-1.0, 1.0)):
    """Seeded random model; the last state is terminal, the first is the start.

    Every non-terminal ``(s, a)`` gets between 1 and ``max_entries`` joint
    ``(s_next, d)`` entries, each with probability at least ``floor``.
    If ``exit_prob`` is set, each non-terminal pair also moves to the
    terminal with that probability, which makes every policy proper.
    Draws are rejected until the terminal is reachable from every state.
    """
    if n_states < 1 or n_actions < 1:
        raise InvalidParameter("n_states/n_actions", (n_states, n_actions), "must be >= 1")
    if not (0 < floor <= 1):
        raise InvalidParameter("floor", floor, "must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    terminal = n_states - 1
    states = [f"s{i}" for i in range(n_states - 1)] + ["end"]
    actions = [f"a{j}" for j in range(n_actions)]
    budget = 1.0 - (exit_prob or 0.0)
    cap = max(1, min(max_entries, 2 * n_states, int(budget / floor + 1e-12)))
    while True:
        prob = np.zeros((n_states, n_actions, n_states, 2))
        reward = np.zeros_like(prob)
        prob[terminal, :, terminal, 0] = 1.0
        for s in range(n_states - 1):
            for a in range(n_actions):
                m = int(rng.integers(1, cap + 1))
                cells = set()
                for _ in range(16 * m):
                    if len(cells) == m:
                        break
                    cells.add((int(rng.integers(n_states)), int(rng.random() < damage_rate)))
                cells = sorted(cells)
                mass = floor + (budget - len(cells) * floor) * rng.dirichlet(np.ones(len(cells)))
                for (sp, d), p in zip(cells, mass):
                    prob[s, a, sp, d] = p
                    reward[s, a, sp, d] = rng.uniform(*reward_range)
                if exit_prob:
                    prob[s, a, terminal, 0] += exit_prob
        # renormalize away the float drift left by the dirichlet scaling
        totals = prob.sum(axis=(2, 3), keepdims=True)
        prob = prob / totals
        mdp = Mdp(states, actions, terminal, prob, reward, start=0)
        if not _unreachable_states(mdp.support_mask, terminal):
            return mdp

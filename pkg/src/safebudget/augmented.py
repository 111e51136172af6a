"""Budget-augmented MDP and value iteration over its feasible part.

The augmented state is ``(s, k)`` with ``k`` the remaining damage budget.
A damaging transition at ``k = 0`` falls into an absorbing FAILURE sink.
Given ``k*``, only actions with ``k*(s, a) <= k`` are considered, which
keeps every optimal policy away from FAILURE.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .budget import feasible_actions
from .errors import DimensionMismatch, Infeasible, InvalidParameter, NotConvergedWarning, PolicyUndefined

FAILURE = "FAILURE"


class AugmentedMdp:
    def __init__(self, base, delta):
        if delta < 0:
            raise InvalidParameter("delta", delta, "budget must be >= 0")
        self.base = base
        self.delta = int(delta)

    @property
    def n_budgets(self):
        return self.delta + 1

    @property
    def n_states(self):
        """Product states plus the FAILURE sink."""
        return self.base.n_states * self.n_budgets + 1

    @property
    def failure(self):
        return self.base.n_states * self.n_budgets

    def index(self, s, k):
        return s * self.n_budgets + k

    def state(self, i):
        if i == self.failure:
            return FAILURE
        return divmod(i, self.n_budgets)

    def transitions(self, s, k, a):
        """``(next_state, prob, reward, failed)`` tuples from ``(s, k)`` under ``a``.

        ``next_state`` is a ``(s_next, k_next)`` pair or :data:`FAILURE`.
        """
        out = []
        for sp, d, p, r in self.base.entries(s, a):
            if k - d < 0:
                out.append((FAILURE, p, r, True))
            else:
                out.append(((sp, k - d), p, r, False))
        return out

    def dense(self):
        """Dense ``(prob, expected_reward)`` over indexed augmented states."""
        n, n_a = self.n_states, self.base.n_actions
        prob = np.zeros((n, n_a, n))
        reward = np.zeros((n, n_a))
        for s in range(self.base.n_states):
            for k in range(self.n_budgets):
                i = self.index(s, k)
                for a in range(n_a):
                    for nxt, p, r, _ in self.transitions(s, k, a):
                        j = self.failure if nxt == FAILURE else self.index(*nxt)
                        prob[i, a, j] += p
                        reward[i, a] += p * r
        prob[self.failure, :, self.failure] = 1.0
        return prob, reward


def build_augmented(mdp, delta):
    return AugmentedMdp(mdp, delta)


class AugmentedPolicy:
    """Deterministic choice per ``(s, k)``; ``-1`` marks undefined pairs."""

    def __init__(self, choice, actions=None, states=None):
        self.choice = np.asarray(choice, dtype=np.int64)
        self.actions = actions
        self.states = states

    def act(self, s, k, u=None):
        if k < 0 or k >= self.choice.shape[1] or self.choice[s, k] < 0:
            raise PolicyUndefined(s, k)
        return int(self.choice[s, k])

    def to_dict(self):
        out = {}
        for s, k in np.argwhere(self.choice >= 0):
            sname = self.states[s] if self.states else str(s)
            a = int(self.choice[s, k])
            out[f"{sname}/{k}"] = self.actions[a] if self.actions else a
        return out


@dataclass
class ValueIterationResult:
    values: np.ndarray      # (n_states, delta + 1), NaN outside the trimmed space
    policy: AugmentedPolicy
    residual: float
    iterations: int
    converged: bool

    def value(self, s, k):
        return float(self.values[s, k])

    def values_dict(self, states=None):
        out = {}
        for s, k in np.argwhere(~np.isnan(self.values)):
            name = states[s] if states else str(s)
            out[f"{name}/{k}"] = float(self.values[s, k])
        return out


def feasibility_mask(k_star, delta):
    """``mask[s, k, a]`` is True iff ``k*(s, a) <= k``."""
    budgets = np.arange(delta + 1)
    return k_star.values[:, None, :] <= budgets[None, :, None]


def trimmed_value_iteration(aug, k_star, gamma=1.0, tol=1e-10, max_iter=10_000, start=None,
                            tie_tol=1e-9):
    """Maximize expected return over feasible actions only.

    Raises :class:`Infeasible` when the start state has no feasible action
    at the full budget. Hitting ``max_iter`` emits
    :class:`NotConvergedWarning` and still returns the last iterate.
    """
    mdp = aug.base
    if k_star.shape != mdp.shape:
        raise DimensionMismatch(mdp.shape, k_star.shape)
    if not (0 < gamma <= 1):
        raise InvalidParameter("gamma", gamma, "must lie in (0, 1]")
    start = mdp.start if start is None else start
    delta = aug.delta
    if not feasible_actions(k_star, start, delta):
        raise Infeasible(mdp.states[start], delta)

    feasible = feasibility_mask(k_star, delta)             # (S, K, A)
    active = feasible.any(axis=2)                          # (S, K)
    stay = mdp.prob[..., 0]                                # (S, A, S')
    hit = mdp.prob[..., 1]
    r = mdp.expected_reward()                              # (S, A)

    def backup(v):
        shifted = np.zeros_like(v)
        shifted[:, 1:] = v[:, :-1]                         # V(s', k - 1)
        cont = np.einsum("ijl,lk->ikj", stay, v) + np.einsum("ijl,lk->ikj", hit, shifted)
        q = r[:, None, :] + gamma * cont
        return np.where(feasible, q, -np.inf)

    v = np.zeros(active.shape)
    residual = np.inf
    iterations = 0
    while iterations < max_iter:
        q = backup(v)
        v_new = np.where(active, q.max(axis=2), 0.0)
        residual = float(np.max(np.abs(v_new - v), initial=0.0))
        v = v_new
        iterations += 1
        if residual < tol:
            break
    converged = residual < tol
    if not converged:
        warnings.warn(f"value iteration stopped at residual {residual:.3g} after "
                      f"{iterations} sweeps", NotConvergedWarning, stacklevel=2)

    q = backup(v)
    best = q.max(axis=2, keepdims=True)
    near = feasible & (q >= best - tie_tol * (1.0 + np.abs(best)))
    choice = np.where(active, np.argmax(near, axis=2), -1)
    values = np.where(active, v, np.nan)
    policy = AugmentedPolicy(choice, actions=mdp.actions, states=mdp.states)
    return ValueIterationResult(values, policy, residual, iterations, converged)

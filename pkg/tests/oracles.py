"""Reference computations used only by the tests.

They deliberately take the slow, obvious route (explicit loops, dense
linear solves, exhaustive enumeration) so they stay independent of the
vectorized code they check.
"""
import itertools

import numpy as np

from safebudget.augmented import FAILURE


def plain_value_iteration(mdp, gamma=1.0, tol=1e-12, max_iter=100_000):
    """Unconstrained value iteration on the base model, loop by loop."""
    v = [0.0] * mdp.n_states
    for _ in range(max_iter):
        new = []
        for s in range(mdp.n_states):
            best = -np.inf
            for a in range(mdp.n_actions):
                q = sum(p * (r + gamma * v[sp]) for sp, d, p, r in mdp.entries(s, a))
                best = max(best, q)
            new.append(best)
        diff = max(abs(x - y) for x, y in zip(new, v))
        v = new
        if diff < tol:
            break
    return np.array(v)


def _reachable(aug, k_star, start):
    """Augmented states reachable from ``(start, delta)`` via feasible actions."""
    seen = {(start, aug.delta)}
    stack = [(start, aug.delta)]
    while stack:
        s, k = stack.pop()
        for a in range(aug.base.n_actions):
            if k_star.values[s, a] > k:
                continue
            for nxt, p, r, failed in aug.transitions(s, k, a):
                assert not failed, "feasible action reached FAILURE"
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return sorted(seen)


def evaluate_augmented_policy(aug, choice, start=None, states=None):
    """Exact expected total reward of a deterministic augmented policy.

    ``choice`` maps ``(s, k)`` to an action. Solves ``(I - P) v = r`` over
    non-terminal augmented states; terminal and FAILURE contribute 0.
    """
    mdp = aug.base
    start = mdp.start if start is None else start
    if states is None:
        states = sorted({(s, k) for s in range(mdp.n_states) for k in range(aug.n_budgets)})
    live = [x for x in states if x[0] != mdp.terminal]
    pos = {x: i for i, x in enumerate(live)}
    n = len(live)
    P = np.zeros((n, n))
    r = np.zeros(n)
    for (s, k), i in pos.items():
        a = choice[s, k] if not isinstance(choice, dict) else choice[(s, k)]
        for nxt, p, rew, failed in aug.transitions(s, k, a):
            r[i] += p * rew
            if nxt != FAILURE and nxt[0] != mdp.terminal:
                P[i, pos[nxt]] += p
    v = np.linalg.solve(np.eye(n) - P, r)
    key = (start, aug.delta)
    return 0.0 if key not in pos else float(v[pos[key]])


def best_feasible_value(aug, k_star, start=None):
    """Maximum start value over every deterministic feasible augmented policy.

    Enumerates all action assignments on the reachable feasible region and
    solves the policy-evaluation system for each assignment in one batch.
    """
    mdp = aug.base
    start = mdp.start if start is None else start
    region = [x for x in _reachable(aug, k_star, start) if x[0] != mdp.terminal]
    options = [[a for a in range(mdp.n_actions) if k_star.values[s, a] <= k] for s, k in region]
    pos = {x: i for i, x in enumerate(region)}
    n = len(region)
    if n == 0:
        return 0.0
    # per state/action rows of the transition matrix and reward
    rows = {}
    for (s, k), i in pos.items():
        for a in options[i]:
            row = np.zeros(n)
            rew = 0.0
            for nxt, p, rr, failed in aug.transitions(s, k, a):
                rew += p * rr
                if nxt[0] != mdp.terminal:
                    row[pos[nxt]] += p
            rows[i, a] = (row, rew)
    combos = list(itertools.product(*options))
    P = np.zeros((len(combos), n, n))
    r = np.zeros((len(combos), n))
    for c, combo in enumerate(combos):
        for i, a in enumerate(combo):
            P[c, i], r[c, i] = rows[i, a]
    v = np.linalg.solve(np.eye(n)[None] - P, r[..., None])[..., 0]
    return float(v[:, pos[(start, aug.delta)]].max())


def stopped_chain_mean_return(p_damage, delta):
    """Expected number of ``left`` steps before ``delta`` damages occur."""
    # negative binomial: delta successes at success probability p_damage
    return delta / p_damage

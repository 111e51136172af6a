"""Learning ``k*`` from a generative model.

Draw ``N`` transitions at every ``(s, a)``, tally the joint ``(s', d)``
counts, and run the budget iteration on the support of the empirical
kernel. Only the sign pattern of the estimate matters, so ``N`` is set by
the smallest non-zero joint probability ``mu`` rather than by an accuracy
target.
"""
import math
from typing import Protocol

import numpy as np

from .budget import solve_minimal_budget
from .errors import DimensionMismatch, InvalidParameter, SafeBudgetError, SamplerFailure
from .mdp import Mdp

# Tags that keep kernel sampling and episode simulation on disjoint streams.
KERNEL_STREAM = 0
EPISODE_STREAM = 1


def substream(seed, *key):
    return np.random.default_rng([int(seed), *map(int, key)])


class GenerativeSampler(Protocol):
    def draw(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, int]:
        ...


class ModelSampler:
    """Generative sampler backed by a known :class:`~safebudget.mdp.Mdp`."""

    def __init__(self, mdp):
        self.mdp = mdp
        self.states = mdp.states
        self.actions = mdp.actions
        self.terminal = mdp.terminal
        n_s, n_a = mdp.shape
        self._cells = {}
        for s in range(n_s):
            for a in range(n_a):
                flat = mdp.prob[s, a].ravel()
                idx = np.flatnonzero(flat > 0)
                cdf = np.cumsum(flat[idx])
                cdf[-1] = 1.0
                self._cells[s, a] = (idx, cdf)

    def _lookup(self, s, a, u):
        idx, cdf = self._cells[s, a]
        return idx[np.searchsorted(cdf, u, side="right")]

    def draw(self, s, a, rng):
        cell = int(self._lookup(s, a, rng.random()))
        return divmod(cell, 2)

    def draw_many(self, s, a, n, rng):
        cells = self._lookup(s, a, rng.random(n))
        return cells // 2, cells % 2


class EmpiricalKernel:
    """Joint transition counts with ``n`` draws per ``(s, a)``."""

    def __init__(self, counts, n):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 4 or counts.shape[3] != 2 or counts.shape[2] != counts.shape[0]:
            raise DimensionMismatch(("S", "A", "S", 2), counts.shape)
        if np.any(counts.sum(axis=(2, 3)) != n):
            raise ValueError(f"every (s, a) must hold exactly {n} counts")
        counts.setflags(write=False)
        self.counts = counts
        self.n = int(n)

    @property
    def shape(self):
        return self.counts.shape[:2]

    @property
    def probabilities(self):
        return self.counts / self.n

    @property
    def support_mask(self):
        return self.counts > 0

    def __eq__(self, other):
        if not isinstance(other, EmpiricalKernel):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.counts, other.counts)

    __hash__ = None

    def surrogate_mdp(self, states=None, actions=None, terminal=None):
        """Model with the estimated kernel and zero rewards.

        No structural validation is run: the budget iteration needs only
        the support, which is well defined for any count table.
        """
        n_s, n_a = self.shape
        states = states or [f"s{i}" for i in range(n_s)]
        actions = actions or [f"a{j}" for j in range(n_a)]
        terminal = n_s - 1 if terminal is None else terminal
        return Mdp(states, actions, terminal, self.probabilities,
                   np.zeros(self.counts.shape), start=0)

    def to_dict(self, states=None, actions=None):
        n_s, n_a = self.shape
        states = states or [f"s{i}" for i in range(n_s)]
        actions = actions or [f"a{j}" for j in range(n_a)]
        counts = []
        for s in range(n_s):
            for a in range(n_a):
                for sp, d in np.argwhere(self.counts[s, a] > 0):
                    counts.append({"s": states[s], "a": actions[a], "s_next": states[sp],
                                   "d": int(d), "count": int(self.counts[s, a, sp, d])})
        return {"N": self.n, "counts": counts,
                "support": self.support_mask.astype(int).tolist()}


def required_samples(n_states, n_actions, mu, delta):
    """Smallest ``N`` with ``N >= log(2 |S|^2 |A| / delta) / mu``."""
    if n_states < 1 or n_actions < 1:
        raise InvalidParameter("dims", (n_states, n_actions), "counts must be >= 1")
    if not (0 < mu <= 1):
        raise InvalidParameter("mu", mu, "must lie in (0, 1]")
    if not (0 < delta < 1):
        raise InvalidParameter("delta", delta, "must lie in (0, 1)")
    bound = math.log(2 * n_states ** 2 * n_actions / delta) / mu
    return max(1, math.ceil(bound))


def build_empirical_kernel(sampler, dims, n, seed):
    """Sample ``n`` transitions from every ``(s, a)`` and tally them.

    Pair ``(s, a)`` draws from its own substream of ``seed``, so the result
    does not depend on the order in which pairs are visited.
    """
    n_s, n_a = dims
    if n < 1:
        raise InvalidParameter("n", n, "must be >= 1")
    counts = np.zeros((n_s, n_a, n_s, 2), dtype=np.int64)
    for s in range(n_s):
        for a in range(n_a):
            rng = substream(seed, KERNEL_STREAM, s, a)
            try:
                if hasattr(sampler, "draw_many"):
                    nxt, dmg = sampler.draw_many(s, a, n, rng)
                else:
                    nxt, dmg = zip(*(sampler.draw(s, a, rng) for _ in range(n)))
                nxt = np.asarray(nxt, dtype=np.int64)
                dmg = np.asarray(dmg, dtype=np.int64)
            except SafeBudgetError:
                raise
            except Exception as exc:
                raise SamplerFailure(f"sampler failed at ({s}, {a}): {exc}") from exc
            if nxt.shape != (n,) or np.any((nxt < 0) | (nxt >= n_s)) or np.any((dmg != 0) & (dmg != 1)):
                raise SamplerFailure(f"sampler returned an invalid draw at ({s}, {a})")
            np.add.at(counts[s, a], (nxt, dmg), 1)
    return EmpiricalKernel(counts, n)


def is_consistent(p_hat, mdp):
    """True iff the estimate and the model have the same sign pattern."""
    if p_hat.counts.shape != mdp.prob.shape:
        raise DimensionMismatch(mdp.prob.shape, p_hat.counts.shape)
    return bool(np.array_equal(p_hat.counts > 0, mdp.prob > 0))


def solve_from_samples(sampler, dims, mu, delta, seed, samples=None):
    """``k*`` of the surrogate model built from sampled transitions.

    ``samples`` overrides the sample size otherwise given by
    :func:`required_samples`.
    """
    n = required_samples(dims[0], dims[1], mu, delta) if samples is None else samples
    kernel = build_empirical_kernel(sampler, dims, n, seed)
    surrogate = kernel.surrogate_mdp(getattr(sampler, "states", None),
                                     getattr(sampler, "actions", None),
                                     getattr(sampler, "terminal", None))
    return solve_minimal_budget(surrogate)

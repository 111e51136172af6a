"""Monte-Carlo rollouts with budget tracking, and per-batch statistics."""
import bisect
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .kernel_learning import EPISODE_STREAM, substream

DEFAULT_MAX_STEPS = 100_000
_BLOCK = 256


class StationaryPolicy:
    """Randomized policy on base states that ignores the budget."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0):
            raise InvalidParameter("probs", probs.shape, "rows must be probability vectors")
        self.probs = probs
        self._cdf = [list(np.cumsum(row)) for row in probs]

    def act(self, s, k, u=0.0):
        cdf = self._cdf[s]
        return min(bisect.bisect_right(cdf, u * cdf[-1]), len(cdf) - 1)


def expectation_constrained_policy(c, p_damage):
    """Best stationary policy on the chain under ``E[total damage] <= c``.

    Plays ``left`` with probability ``c / (p_damage + c)``; that choice
    meets the expected-damage bound with equality.
    """
    if c < 0 or not math.isfinite(c):
        raise InvalidParameter("c", c, "must be a finite number >= 0")
    if not (0 < p_damage <= 1):
        raise InvalidParameter("p_damage", p_damage, "must lie in (0, 1]")
    q = c / (p_damage + c)
    return StationaryPolicy([[q, 1.0 - q], [0.0, 1.0]])


@dataclass
class TrajectoryRecord:
    steps: list = field(default_factory=list)   # (s, a, s_next, r, d)
    total_return: float = 0.0
    total_damage: int = 0
    truncated: bool = False


class _Sampler:
    # Python-level cdf tables; a per-step numpy call dominates runtime otherwise.
    def __init__(self, mdp):
        self.table = {}
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                entries = mdp.entries(s, a)
                cdf = list(np.cumsum([p for _, _, p, _ in entries]))
                cdf[-1] = 1.0
                self.table[s, a] = ([(sp, d, r) for sp, d, _, r in entries], cdf)

    def step(self, s, a, u):
        cells, cdf = self.table[s, a]
        return cells[min(bisect.bisect_right(cdf, u), len(cells) - 1)]


def _rollout(mdp, sampler, policy, delta, rng, max_steps, start):
    rec = TrajectoryRecord()
    s, k = start, delta
    buf, pos = rng.random(_BLOCK), 0
    for _ in range(max_steps):
        if s == mdp.terminal:
            break
        if pos + 2 > _BLOCK:
            buf, pos = rng.random(_BLOCK), 0
        a = policy.act(s, k, buf[pos])
        sp, d, r = sampler.step(s, a, buf[pos + 1])
        pos += 2
        rec.steps.append((s, a, sp, r, d))
        rec.total_damage += d
        s, k = sp, k - d
    rec.truncated = s != mdp.terminal
    rec.total_return = math.fsum(step[3] for step in rec.steps)
    return rec


def rollout(mdp, policy, delta, seed, max_steps=DEFAULT_MAX_STEPS, start=None, episode=0):
    """One episode from ``start`` with initial budget ``delta``.

    The budget drops by one on every damaging step; augmented policies
    raise :class:`PolicyUndefined` if asked to act at an undefined pair.
    """
    if max_steps < 1:
        raise InvalidParameter("max_steps", max_steps, "must be >= 1")
    start = mdp.start if start is None else start
    rng = substream(seed, EPISODE_STREAM, episode)
    return _rollout(mdp, _Sampler(mdp), policy, delta, rng, max_steps, start)


@dataclass
class EpisodeStats:
    n_episodes: int
    damage_histogram: dict
    return_histogram: dict
    mean_return: float
    mean_damage: float
    std_return: float
    std_damage: float
    min_return: float
    max_damage: int
    n_truncated: int

    @property
    def stderr_return(self):
        return self.std_return / math.sqrt(self.n_episodes)

    @property
    def stderr_damage(self):
        return self.std_damage / math.sqrt(self.n_episodes)

    def to_dict(self):
        return {
            "n_episodes": self.n_episodes,
            "mean_return": self.mean_return,
            "mean_damage": self.mean_damage,
            "std_return": self.std_return,
            "std_damage": self.std_damage,
            "min_return": self.min_return,
            "max_damage": self.max_damage,
            "n_truncated": self.n_truncated,
            "damage_histogram": {str(k): v for k, v in self.damage_histogram.items()},
            "return_histogram": {str(k): v for k, v in self.return_histogram.items()},
        }


def _bin(value, width):
    # round half up; the builtin round() sends x.5 to the even neighbour
    idx = math.floor(value / width + 0.5)
    if width == 1:
        return idx
    return round(idx * width, 12)


def summarize(records, return_bin=1):
    n = len(records)
    returns = np.array([r.total_return for r in records])
    damages = np.array([r.total_damage for r in records])
    dmg_hist, ret_hist = {}, {}
    for r in records:
        dmg_hist[r.total_damage] = dmg_hist.get(r.total_damage, 0) + 1
        key = _bin(r.total_return, return_bin)
        ret_hist[key] = ret_hist.get(key, 0) + 1
    return EpisodeStats(
        n_episodes=n,
        damage_histogram=dict(sorted(dmg_hist.items())),
        return_histogram=dict(sorted(ret_hist.items())),
        mean_return=math.fsum(returns) / n,
        mean_damage=float(damages.sum()) / n,
        std_return=float(returns.std(ddof=1)) if n > 1 else 0.0,
        std_damage=float(damages.std(ddof=1)) if n > 1 else 0.0,
        min_return=float(returns.min()),
        max_damage=int(damages.max()),
        n_truncated=sum(r.truncated for r in records),
    )


def simulate_episodes(mdp, policy, delta, n_episodes, seed, max_steps=DEFAULT_MAX_STEPS,
                      start=None, threads=1):
    """Trajectory records for episodes ``0..n_episodes-1``, in episode order."""
    if n_episodes < 1:
        raise InvalidParameter("n_episodes", n_episodes, "must be >= 1")
    if max_steps < 1:
        raise InvalidParameter("max_steps", max_steps, "must be >= 1")
    start = mdp.start if start is None else start
    sampler = _Sampler(mdp)

    def run(chunk):
        return [_rollout(mdp, sampler, policy, delta, substream(seed, EPISODE_STREAM, i),
                         max_steps, start) for i in chunk]

    if threads <= 1:
        return run(range(n_episodes))
    bounds = np.linspace(0, n_episodes, threads + 1).astype(int)
    chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, chunks))
    return [rec for part in parts for rec in part]


def run_episodes(mdp, policy, delta, n_episodes, seed, max_steps=DEFAULT_MAX_STEPS,
                 start=None, threads=1, return_bin=1):
    records = simulate_episodes(mdp, policy, delta, n_episodes, seed, max_steps, start, threads)
    return summarize(records, return_bin)


def histogram_csv(hist):
    out = io.StringIO()
    out.write("value,count\n")
    for value, count in hist.items():
        out.write(f"{value},{count}\n")
    return out.getvalue()


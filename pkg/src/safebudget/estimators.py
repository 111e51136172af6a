"""Estimator-style wrappers around the functional core.

These follow the scikit-learn conventions (constructor stores parameters
verbatim, ``fit`` returns ``self``, learned state ends in ``_``) so the
solvers can be configured with ``get_params``/``set_params`` and cloned.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .augmented import build_augmented, trimmed_value_iteration
from .budget import Barrier, feasible_actions, safety_game_oracle, solve_minimal_budget, unsafe_states
from .errors import DimensionMismatch, InvalidParameter
from .kernel_learning import ModelSampler, build_empirical_kernel, is_consistent, required_samples
from .mdp import Mdp


def _check_mdp(mdp):
    if not isinstance(mdp, Mdp):
        raise TypeError(f"expected an Mdp, got {type(mdp).__name__}")
    return mdp


def _check_rows(X, width, upper):
    X = check_array(X, dtype=np.int64, ensure_2d=True)
    if X.shape[1] != width:
        raise DimensionMismatch(("n", width), X.shape)
    if np.any(X < 0) or np.any(X > np.asarray(upper)):
        raise InvalidParameter("X", X.shape, f"indices out of range {upper}")
    return X


class MinimalBudget(BaseEstimator):
    """Minimal damage budget of a known model.

    Parameters
    ----------
    method : {"iteration", "oracle"}
        ``"iteration"`` runs the budget fixed-point iteration; ``"oracle"``
        solves the equivalent safety game instead.
    """

    def __init__(self, method="iteration"):
        self.method = method

    def fit(self, mdp, y=None):
        mdp = _check_mdp(mdp)
        if self.method == "iteration":
            self.k_star_ = solve_minimal_budget(mdp)
            self.n_sweeps_ = self.k_star_.sweeps
        elif self.method == "oracle":
            self.k_star_ = safety_game_oracle(mdp)
            self.n_sweeps_ = None
        else:
            raise InvalidParameter("method", self.method, "expected 'iteration' or 'oracle'")
        self.n_states_, self.n_actions_ = mdp.shape
        return self

    def predict(self, X):
        """1 (SAFE) or 0 (UNSAFE) for each ``(state, budget, action)`` row."""
        check_is_fitted(self, "k_star_")
        X = _check_rows(X, 3, [self.n_states_ - 1, np.iinfo(np.int64).max, self.n_actions_ - 1])
        need = self.k_star_.values[X[:, 0], X[:, 2]]
        return (X[:, 1] >= need).astype(int)

    def barrier(self, X):
        return [Barrier.SAFE if v else Barrier.UNSAFE for v in self.predict(X)]

    def feasible_actions(self, s, k):
        check_is_fitted(self, "k_star_")
        return feasible_actions(self.k_star_, s, k)

    def unsafe_states(self, delta):
        check_is_fitted(self, "k_star_")
        return unsafe_states(self.k_star_, delta)


class SampledMinimalBudget(BaseEstimator):
    """Minimal damage budget learned from a generative sampler.

    ``mu`` is the assumed lower bound on every non-zero joint transition
    probability and ``delta_prob`` the tolerated chance of missing part of
    the support. ``n_samples`` overrides the derived per-pair sample size.
    """

    def __init__(self, mu=0.1, delta_prob=0.05, seed=0, n_samples=None):
        self.mu = mu
        self.delta_prob = delta_prob
        self.seed = seed
        self.n_samples = n_samples

    def fit(self, sampler, y=None, dims=None):
        if isinstance(sampler, Mdp):
            sampler = ModelSampler(sampler)
        if dims is None:
            dims = (len(sampler.states), len(sampler.actions))
        self.n_samples_ = (required_samples(dims[0], dims[1], self.mu, self.delta_prob)
                           if self.n_samples is None else int(self.n_samples))
        self.kernel_ = build_empirical_kernel(sampler, dims, self.n_samples_, self.seed)
        surrogate = self.kernel_.surrogate_mdp(getattr(sampler, "states", None),
                                               getattr(sampler, "actions", None),
                                               getattr(sampler, "terminal", None))
        self.k_star_ = solve_minimal_budget(surrogate)
        return self

    def is_consistent(self, mdp):
        check_is_fitted(self, "kernel_")
        return is_consistent(self.kernel_, mdp)


class SafeValueIteration(BaseEstimator):
    """Optimal memory-one policy under a probability-one damage budget.

    ``fit`` solves for ``k*`` unless one is passed, then runs value
    iteration on the trimmed augmented model. ``predict`` maps
    ``(state, budget)`` rows to actions.
    """

    def __init__(self, delta=0, gamma=1.0, tol=1e-10, max_iter=10_000):
        self.delta = delta
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp, k_star=None):
        mdp = _check_mdp(mdp)
        self.k_star_ = solve_minimal_budget(mdp) if k_star is None else k_star
        result = trimmed_value_iteration(build_augmented(mdp, self.delta), self.k_star_,
                                         gamma=self.gamma, tol=self.tol, max_iter=self.max_iter)
        self.result_ = result
        self.values_ = result.values
        self.policy_ = result.policy
        self.converged_ = result.converged
        self.start_value_ = result.value(mdp.start, self.delta)
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        n_s, n_k = self.policy_.choice.shape
        X = _check_rows(X, 2, [n_s - 1, n_k - 1])
        return np.array([self.policy_.act(s, k) for s, k in X], dtype=int)

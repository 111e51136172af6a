"""Minimal damage budgets for MDPs with probability-one damage constraints."""
__version__ = "0.1.0"

from .augmented import AugmentedMdp, AugmentedPolicy, build_augmented, trimmed_value_iteration
from .budget import (
    INF,
    Barrier,
    BudgetTable,
    apply_budget_operator,
    barrier,
    feasible_actions,
    safety_game_oracle,
    solve_minimal_budget,
    unsafe_states,
)
from .estimators import MinimalBudget, SafeValueIteration, SampledMinimalBudget
from .kernel_learning import (
    EmpiricalKernel,
    ModelSampler,
    build_empirical_kernel,
    is_consistent,
    required_samples,
    solve_from_samples,
)
from .mdp import Mdp, SupportEntry, chain_mdp, load_mdp, random_mdp, support, validate_mdp
from .simulate import (
    EpisodeStats,
    StationaryPolicy,
    TrajectoryRecord,
    expectation_constrained_policy,
    rollout,
    run_episodes,
)

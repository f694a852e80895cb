"""Subset-selection engines: exact/approximated greedy, greedy sampling, training."""

from moco_greedy.selection.greedy import (
    GreedyTrace,
    HillClimb,
    RandomSearch,
    ReinforceMaximizer,
    StepRecord,
    SubsetProblem,
    approx_greedy,
    exact_greedy,
    exact_step,
    greedy_sample,
    ground_set,
    make_maximizer,
)
from moco_greedy.selection.training import (
    TrainConfig,
    TrainLog,
    estimator_mean,
    exact_objective,
    pc_rl_batch,
    query_budget,
    train_greedy_policy,
    train_pc_policy,
)

__all__ = [
    "GreedyTrace",
    "HillClimb",
    "RandomSearch",
    "ReinforceMaximizer",
    "StepRecord",
    "SubsetProblem",
    "TrainConfig",
    "TrainLog",
    "approx_greedy",
    "estimator_mean",
    "exact_objective",
    "exact_greedy",
    "exact_step",
    "greedy_sample",
    "ground_set",
    "make_maximizer",
    "pc_rl_batch",
    "query_budget",
    "train_greedy_policy",
    "train_pc_policy",
]

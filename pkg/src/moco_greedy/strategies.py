"""Named subset-selection strategies run under a shared surrogate-query budget."""

from dataclasses import dataclass, replace

from moco_greedy.policy import Policy
from moco_greedy.selection import (
    HillClimb,
    RandomSearch,
    ReinforceMaximizer,
    approx_greedy,
    exact_greedy,
    query_budget,
    train_greedy_policy,
    train_pc_policy,
)
from moco_greedy.tasks import ContractError

STRATEGIES = ("ours", "exact-greedy", "greedy-rs", "greedy-hc", "greedy-rl", "pc-rl-ws", "pc-rl-ts")


@dataclass
class StrategyResult:
    subset: list
    value: float
    queries: int
    trace: object = None
    log: object = None
    policy: object = None


def run_strategy(name, acq, space, n, train_cfg, rng, hidden=64, policy_seed=0, callback=None):
    """Propose an ``n``-subset with strategy ``name``.

    Budgeted baselines get ``query_budget(train_cfg, n)`` surrogate queries in
    total, split evenly over the ``n`` greedy steps.
    """
    if name not in STRATEGIES:
        raise ContractError(f"unknown strategy {name!r}")
    cfg = replace(train_cfg, eval_sizes=(n,))
    budget = query_budget(cfg, n)
    m = acq.n_objectives
    if name == "ours":
        pol = Policy(space, m, hidden=hidden, seed=policy_seed)
        pol, log = train_greedy_policy(acq, cfg, pol, rng, callback)
        subset = log.best_subset.get(n, [])
        return StrategyResult(subset, acq.value(subset), log.queries, log=log, policy=pol)
    if name.startswith("pc-rl"):
        kind = "weighted" if name.endswith("ws") else "chebyshev"
        pol = Policy(space, m, hidden=hidden, condition="pref", seed=policy_seed)
        pol, log = train_pc_policy(acq, cfg, pol, kind, rng, callback)
        subset = log.best_subset.get(n, [])
        return StrategyResult(subset, acq.value(subset), log.queries, log=log, policy=pol)
    if name == "exact-greedy":
        trace = exact_greedy(acq, space, n)
    else:
        per_step = max(budget // n, 1)
        if name == "greedy-rs":
            maximizer = RandomSearch()
        elif name == "greedy-hc":
            maximizer = HillClimb()
        else:
            maximizer = ReinforceMaximizer(m, updates=max(cfg.n_updates // n, 1),
                                           episodes=cfg.n_episodes, lr=cfg.lr, hidden=hidden,
                                           p_rand=cfg.p_rand, eps=cfg.eps_norm,
                                           optimizer=cfg.optimizer)
        trace = approx_greedy(acq, space, n, maximizer, per_step, rng)
    return StrategyResult(list(trace.subset), trace.value, trace.queries, trace=trace)

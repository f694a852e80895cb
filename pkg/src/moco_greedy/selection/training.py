"""Amortized training of the set-conditioned greedy policy, and the PC-RL baseline."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from moco_greedy.policy import reinforce_step, sample_preferences, scalarize
from moco_greedy.selection.greedy import greedy_sample
from moco_greedy.tasks import ContractError


@dataclass
class TrainConfig:
    n_train: int = 4
    n_updates: int = 2000
    n_episodes: int = 128
    behavior_period: int = 4
    lr: float = 1e-3
    p_rand: float = 0.0
    eps_norm: float = 1e-8
    eval_period: int = 64
    eval_samples: int = 16
    eval_sizes: tuple = (4,)
    optimizer: str = "adam"

    def __post_init__(self):
        self.eval_sizes = tuple(int(n) for n in self.eval_sizes)
        for name in ("n_train", "n_updates", "n_episodes", "behavior_period", "eval_period",
                     "eval_samples"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.lr <= 0 or self.eps_norm <= 0:
            raise ContractError("lr and eps_norm must be positive")
        if not 0.0 <= self.p_rand < 1.0:
            raise ContractError("p_rand must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        d = asdict(self)
        d["eval_sizes"] = list(self.eval_sizes)
        return d


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    best_value: dict = field(default_factory=dict)
    best_subset: dict = field(default_factory=dict)
    queries: int = 0

    def record_eval(self, n, subset, value):
        if value > self.best_value.get(n, -np.inf):
            self.best_value[n] = value
            self.best_subset[n] = list(subset)


def _optimizer(policy, cfg):
    if cfg.optimizer == "adam":
        return torch.optim.Adam(policy.net.parameters(), lr=cfg.lr)
    return None


def _evaluate(acq, policy, cfg, rng, log):
    for n in cfg.eval_sizes:
        trace = greedy_sample(acq, policy, n, cfg.eval_samples, rng)
        log.queries += trace.queries
        log.record_eval(n, trace.subset, trace.value)


def train_greedy_policy(acq, cfg, policy, rng, callback=None):
    """Train a set-conditioned policy so that it solves its own greedy subproblems.

    Each update draws ``k ~ Unif{0..n_train-1}``, a conditioning subset from
    greedy sampling of the frozen behavior policy (refreshed every
    ``behavior_period`` updates), then ``n_episodes`` candidates from the
    current policy rewarded by their marginal gain.
    """
    opt = _optimizer(policy, cfg)
    log = TrainLog()
    start = time.perf_counter()
    behavior = None
    for i in range(cfg.n_updates):
        if i % cfg.behavior_period == 0:
            behavior = policy.snapshot()
        k = int(rng.integers(0, cfg.n_train))
        cond_trace = greedy_sample(acq, behavior, k, 1, rng, cfg.p_rand)
        subset = cond_trace.subset
        feats = acq.features(subset)
        trajs = policy.sample(feats, cfg.n_episodes, rng, cfg.p_rand)
        xs = [t.candidate for t in trajs]
        r = acq.gains(xs, subset)
        log.queries += cond_trace.queries + len(xs)
        reinforce_step(policy, xs, r, feats, cfg.lr, cfg.eps_norm, opt)
        last = i + 1 == cfg.n_updates
        if (i + 1) % cfg.eval_period == 0 or last:
            _evaluate(acq, policy, cfg, rng, log)
            row = {"update": i + 1, "mean_return": float(np.mean(r)),
                   "best_hv": max(log.best_value.values()) if log.best_value else 0.0,
                   "wall_time": time.perf_counter() - start}
            for n in cfg.eval_sizes:
                row[f"best_hv_n{n}"] = log.best_value.get(n, 0.0)
            log.rows.append(row)
            if callback is not None:
                callback(row)
    return policy, log


def pc_rl_batch(acq, policy, n, l, scalarization, rng, p_rand=0.0):
    """Batch from a preference-conditioned policy: the top draw per preference.

    ``n`` preferences come from a flat Dirichlet; for each, ``l`` draws are
    scored by the scalarized surrogate vector and the best is kept.
    Duplicates are dropped, so the batch may hold fewer than ``n`` items.
    """
    prefs = sample_preferences(acq.n_objectives, n, rng)
    batch, seen = [], set()
    for w in prefs:
        xs = [t.candidate for t in policy.sample(w, l, rng, p_rand)]
        scores = scalarize(w, acq.images(xs), scalarization)
        best = xs[int(np.argmax(scores))]
        if best not in seen:
            seen.add(best)
            batch.append(best)
    return batch


def train_pc_policy(acq, cfg, policy, scalarization, rng, callback=None):
    """REINFORCE on scalarized surrogate values with a fresh preference per update."""
    if policy.condition != "pref":
        raise ContractError("PC-RL needs a preference-conditioned policy")
    opt = _optimizer(policy, cfg)
    log = TrainLog()
    start = time.perf_counter()
    for i in range(cfg.n_updates):
        w = sample_preferences(acq.n_objectives, 1, rng)[0]
        trajs = policy.sample(w, cfg.n_episodes, rng, cfg.p_rand)
        xs = [t.candidate for t in trajs]
        r = scalarize(w, acq.images(xs), scalarization)
        log.queries += len(xs)
        reinforce_step(policy, xs, r, w, cfg.lr, cfg.eps_norm, opt)
        last = i + 1 == cfg.n_updates
        if (i + 1) % cfg.eval_period == 0 or last:
            for n in cfg.eval_sizes:
                batch = pc_rl_batch(acq, policy, n, cfg.eval_samples, scalarization, rng)
                log.queries += n * cfg.eval_samples
                log.record_eval(n, batch, acq.value(batch))
            row = {"update": i + 1, "mean_return": float(np.mean(r)),
                   "best_hv": max(log.best_value.values()),
                   "wall_time": time.perf_counter() - start}
            for n in cfg.eval_sizes:
                row[f"best_hv_n{n}"] = log.best_value.get(n, 0.0)
            log.rows.append(row)
            if callback is not None:
                callback(row)
    return policy, log


def query_budget(cfg, n):
    """Surrogate-query budget matched to the policy methods for cardinality ``n``."""
    return cfg.n_updates * cfg.n_episodes + (cfg.n_updates // cfg.eval_period) * n * cfg.eval_samples


def _subset_distribution(acq, behavior, k, ground):
    """Law of the subset produced by ``GS(a, behavior, k, 1)`` on an enumerable space.

    Returns ``{frozenset: probability}``. A draw already in the subset is a
    stalled step and leaves it unchanged.
    """
    dist = {(): 1.0}
    for _ in range(k):
        nxt = {}
        for subset, p in dist.items():
            with torch.no_grad():
                cond = behavior.encode(acq.features(list(subset)))
                probs = torch.exp(behavior.log_prob(ground, cond)).numpy()
            for x, q in zip(ground, probs):
                key = subset if x in subset else tuple(sorted(subset + (x,)))
                nxt[key] = nxt.get(key, 0.0) + p * float(q)
        dist = nxt
    return dist


def exact_objective(acq, policy, behavior, n_train, ground):
    """Differentiable training objective by full enumeration.

    ``J = E_k E_{B ~ GS(behavior, k, 1)} E_{x ~ pi(.|B)} Δ(x|B)`` with
    ``k ~ Unif{0..n_train-1}``; the behavior policy is held fixed, so the
    gradient of the returned tensor is the partial derivative in the
    current parameters.
    """
    ground = list(ground)
    total = torch.zeros((), dtype=torch.float64)
    for k in range(n_train):
        for subset, p in _subset_distribution(acq, behavior, k, ground).items():
            subset = list(subset)
            gains = torch.as_tensor(acq.gains(ground, subset), dtype=torch.float64)
            probs = torch.exp(policy.log_prob(ground, policy.encode(acq.features(subset))))
            total = total + p / n_train * (probs * gains).sum()
    return total


def estimator_mean(acq, policy, behavior, n_train, ground):
    """Probability-weighted mean of the zero-baseline REINFORCE estimator."""
    ground = list(ground)
    mean = np.zeros(policy.n_params)
    for k in range(n_train):
        for subset, p in _subset_distribution(acq, behavior, k, ground).items():
            subset = list(subset)
            feats = acq.features(subset)
            gains = acq.gains(ground, subset)
            with torch.no_grad():
                probs = torch.exp(policy.log_prob(ground, policy.encode(feats))).numpy()
            for x, q, g in zip(ground, probs, gains):
                if q == 0.0 or g == 0.0:
                    continue
                _, grad = policy.log_prob_and_grad(x, feats)
                mean += p / n_train * q * g * grad
    return mean

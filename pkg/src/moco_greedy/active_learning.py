"""Multi-round active learning: fit a surrogate, propose a batch, query the oracle.

Each round ``i >= 1`` refits the surrogate from scratch on the dataset, asks a
selection strategy for an ``n``-subset under the current acquisition, drops
candidates the oracle has already seen, evaluates the rest and extends the
dataset. Every random stream of round ``i`` is derived from ``(seed, i)``, so a
run resumed from its directory replays the same rounds as an uninterrupted one.
"""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from moco_greedy import pareto
from moco_greedy.acquisition import EnsembleConfig, EnsembleSurrogate, fit_ensemble, make_context
from moco_greedy.seeding import derive_seed, rng_for
from moco_greedy.selection import TrainConfig
from moco_greedy.strategies import run_strategy
from moco_greedy.tasks import ContractError

log = logging.getLogger(__name__)

METRIC_FIELDS = ("round", "queries", "queries_with_init", "hypervolume", "relative_hv",
                 "batch_size", "rejected", "acq_value", "wall_time")


@dataclass
class ALConfig:
    rounds: int = 5
    batch: int = 4
    n_init: int = 16
    surrogate: str = "ensemble"
    beta: float = 0.1
    lam: float = 0.0
    mode: str = "plain"
    hidden: int = 64
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.rounds < 1 or self.batch < 1:
            raise ContractError("rounds and batch must be at least 1")
        if self.n_init < 0:
            raise ContractError("n_init must be non-negative")
        if self.surrogate not in ("ensemble", "deterministic"):
            raise ContractError(f"unknown surrogate {self.surrogate!r}")
        if self.surrogate == "ensemble" and self.n_init < 2:
            raise ContractError("an ensemble surrogate needs at least 2 initial points")


class Dataset:
    """Oracle-labelled candidates in query order, with the round of each query."""

    def __init__(self, n_objectives):
        self.n_objectives = n_objectives
        self.candidates = []
        self.values = np.zeros((0, n_objectives))
        self.rounds = []
        self._seen = set()

    def __len__(self):
        return len(self.candidates)

    def __contains__(self, x):
        return tuple(x) in self._seen

    def add(self, xs, ys, round_idx):
        xs = [tuple(x) for x in xs]
        if any(x in self._seen for x in xs) or len(set(xs)) != len(xs):
            raise ContractError("candidate already in the dataset")
        ys = np.asarray(ys, dtype=np.float64).reshape(len(xs), self.n_objectives)
        self.candidates.extend(xs)
        self.values = np.vstack([self.values, ys])
        self.rounds.extend([round_idx] * len(xs))
        self._seen.update(xs)

    def boundaries(self):
        """Index one past the last query of each round present."""
        out = {}
        for i, r in enumerate(self.rounds):
            out[r] = i + 1
        return out

    def pareto(self):
        """Candidates and images of the non-dominated subset."""
        if not len(self):
            return [], self.values
        mask = pareto.non_dominated_mask(self.values)
        return [x for x, keep in zip(self.candidates, mask) if keep], self.values[mask]


@dataclass
class RoundMetrics:
    round: int
    queries: int
    queries_with_init: int
    hypervolume: float
    relative_hv: float
    batch_size: int
    rejected: int
    acq_value: float
    wall_time: float


def relative_hypervolume(metrics, baseline_round=0):
    """HV of each round over the baseline round's HV.

    Returns ``(values, is_relative)``; with a zero baseline the absolute HVs
    come back with ``is_relative = False``.
    """
    base = next(m.hypervolume for m in metrics if m.round == baseline_round)
    if base <= 0.0:
        return [m.hypervolume for m in metrics], False
    return [m.hypervolume / base for m in metrics], True


def queries_to_target(metrics, target, with_init=False):
    """Query count at the first round whose HV reaches ``target``, else None."""
    for m in metrics:
        if m.hypervolume >= target:
            return m.queries_with_init if with_init else m.queries
    return None


def initial_dataset(oracle, space, n_init, rng):
    """``n_init`` distinct uniform draws, labelled by the oracle."""
    xs, seen = [], set()
    if n_init > space.size():
        raise ContractError("n_init exceeds the size of the space")
    while len(xs) < n_init:
        for x in space.sample_uniform(rng, n_init - len(xs)):
            if x not in seen:
                seen.add(x)
                xs.append(x)
    return xs, oracle.evaluate_many(xs)


def _fit_surrogate(oracle, data, cfg, seed):
    if cfg.surrogate == "deterministic":
        return oracle
    ens_cfg = replace(cfg.ensemble, seed=seed)
    sp = oracle.space
    return fit_ensemble(data.candidates, data.values, sp.n_tokens, sp.max_len, ens_cfg)


def _propose(strategy, acq, space, cfg, rng, policy_seed):
    if callable(strategy):
        return list(strategy(acq, space, cfg.batch, rng)), None
    res = run_strategy(strategy, acq, space, cfg.batch, cfg.train, rng, cfg.hidden, policy_seed)
    return list(res.subset), res


def _hv(data, ref):
    return pareto.hypervolume(data.values, ref) if len(data) else 0.0


def run_active_learning(oracle, strategy, cfg, seed, ref=None, init=None, run_dir=None,
                        resume=False):
    """Run ``cfg.rounds`` rounds and return ``(dataset, metrics)``.

    ``strategy`` is a strategy name or a callable ``(acq, space, n, rng) -> batch``.
    ``init`` optionally supplies ``(candidates, values)`` for round 0; otherwise
    ``cfg.n_init`` uniform draws are labelled. With ``run_dir`` every round is
    persisted, and ``resume=True`` continues after the last recorded round.
    """
    space = oracle.space
    m = oracle.n_objectives
    ref = np.zeros(m) if ref is None else np.asarray(ref, dtype=np.float64)
    run = RunDir(run_dir, space.decode) if run_dir is not None else None
    data = Dataset(m)
    metrics = []
    start_round = 1
    if run is not None and resume and run.exists():
        data, metrics = run.load(m)
        start_round = metrics[-1].round + 1 if metrics else 1
    if not metrics:
        if init is None:
            xs, ys = initial_dataset(oracle, space, cfg.n_init, rng_for(seed, "init"))
        else:
            xs, ys = init
        data.add(xs, ys, 0)
        n0 = len(data)
        metrics.append(RoundMetrics(0, 0, n0, _hv(data, ref), 1.0, n0, 0, 0.0, 0.0))
        if run is not None:
            run.start(cfg, seed, ref)
            run.record(data, 0, metrics[-1])
    n0 = data.boundaries().get(0, 0)
    base_hv = metrics[0].hypervolume
    for r in range(start_round, cfg.rounds + 1):
        t0 = time.perf_counter()
        surrogate = _fit_surrogate(oracle, data, cfg, derive_seed(seed, r, "surrogate"))
        acq = make_context(surrogate, space, ref, archive=data.values, beta=cfg.beta,
                           lam=cfg.lam, mode=cfg.mode,
                           prev=list(data.candidates) if cfg.lam > 0 else [])
        batch, res = _propose(strategy, acq, space, cfg, rng_for(seed, r, "strategy"),
                              derive_seed(seed, r, "policy") % 2**31)
        fresh = [x for x in dict.fromkeys(tuple(x) for x in batch) if x not in data]
        rejected = len(batch) - len(fresh)
        if rejected:
            log.warning("round %d: dropped %d already-evaluated candidates", r, rejected)
        if fresh:
            data.add(fresh, oracle.evaluate_many(fresh), r)
        hv = _hv(data, ref)
        rel = hv / base_hv if base_hv > 0 else hv
        metrics.append(RoundMetrics(r, len(data) - n0, len(data), hv, rel, len(fresh), rejected,
                                    float(acq.value(batch)), time.perf_counter() - t0))
        if run is not None:
            run.record(data, r, metrics[-1], surrogate, res)
    return data, metrics


class RunDir:
    """On-disk layout of one active-learning run.

    ``config.json`` holds the resolved configuration, ``dataset.jsonl`` one
    record per oracle query, ``metrics.csv`` one row per round and
    ``checkpoints/`` the fitted surrogate and trained policy of each round.
    """

    def __init__(self, path, decode=None):
        self.path = Path(path)
        self.decode = decode

    def exists(self):
        return (self.path / "metrics.csv").exists()

    def start(self, cfg, seed, ref):
        self.path.mkdir(parents=True, exist_ok=True)
        (self.path / "checkpoints").mkdir(exist_ok=True)
        doc = {"seed": int(seed), "ref": [float(v) for v in ref], "config": _plain(cfg)}
        (self.path / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        (self.path / "dataset.jsonl").write_text("")
        with open(self.path / "metrics.csv", "w", newline="") as f:
            csv.writer(f).writerow(METRIC_FIELDS)

    def record(self, data, round_idx, metrics, surrogate=None, result=None):
        with open(self.path / "dataset.jsonl", "a") as f:
            for x, y, r in zip(data.candidates, data.values, data.rounds):
                if r == round_idx:
                    rec = {"round": r, "candidate": list(x)}
                    if self.decode is not None:
                        rec["sequence"] = self.decode(x)
                    rec["values"] = [float(v) for v in y]
                    f.write(json.dumps(rec) + "\n")
        if isinstance(surrogate, EnsembleSurrogate):
            surrogate.save(self.path / "checkpoints" / f"surrogate_round{round_idx}.npz")
        if result is not None and result.policy is not None:
            result.policy.save(self.path / "checkpoints" / f"policy_round{round_idx}.npz")
        with open(self.path / "metrics.csv", "a", newline="") as f:
            row = asdict(metrics)
            csv.writer(f).writerow([_fmt(row[k]) for k in METRIC_FIELDS])

    def load(self, n_objectives):
        data = Dataset(n_objectives)
        with open(self.path / "metrics.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        metrics = [RoundMetrics(int(r["round"]), int(r["queries"]), int(r["queries_with_init"]),
                                float(r["hypervolume"]), float(r["relative_hv"]),
                                int(r["batch_size"]), int(r["rejected"]), float(r["acq_value"]),
                                float(r["wall_time"])) for r in rows]
        last = metrics[-1].round if metrics else -1
        by_round = {}
        with open(self.path / "dataset.jsonl") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    if rec["round"] <= last:
                        by_round.setdefault(rec["round"], []).append(rec)
        for r in sorted(by_round):
            recs = by_round[r]
            data.add([tuple(rec["candidate"]) for rec in recs], [rec["values"] for rec in recs], r)
        return data, metrics


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj

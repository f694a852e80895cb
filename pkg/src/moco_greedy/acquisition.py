"""Surrogate models and batch acquisition set functions.

Two surrogate flavours share the ``predict`` interface:

* :class:`DeterministicSurrogate` wraps an objective evaluator (for the
  synthetic tasks the objective itself plays this role);
* :class:`EnsembleSurrogate` is a bootstrap ensemble of small MLPs over
  k-mer count features, supplying a mean and a population std per objective.

:class:`AcquisitionContext` turns a surrogate, an evaluated archive and a
reference point into a set function over candidates, in one of three modes:
``plain`` (HVI), ``objective`` (HVI plus sum-dispersion diversity) and
``guide`` (halved HVI plus the same diversity terms).
"""

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from moco_greedy import pareto
from moco_greedy.tasks import ContractError, hamming_matrix, pad_candidates

FEATURE_BETA = 0.1
MODES = ("plain", "objective", "guide")
CHECKPOINT_VERSION = 1


class DeterministicSurrogate:
    """Deterministic surrogate backed by a vectorised evaluator."""

    is_deterministic = True

    def __init__(self, evaluate_many, n_objectives):
        self._evaluate = evaluate_many
        self.n_objectives = n_objectives

    @classmethod
    def from_task(cls, task):
        return cls(task.evaluate_many, task.n_objectives)

    def predict(self, xs):
        return np.asarray(self._evaluate(list(xs)), dtype=np.float64).reshape(len(xs), -1)

    def ucb(self, xs, beta):
        return self.predict(xs)


# -- ensemble ----------------------------------------------------------------

def kmer_features(xs, n_tokens, max_len):
    """Unigram and bigram counts, scaled by the maximum length."""
    arr = pad_candidates(xs, max_len)
    n = len(xs)
    uni = np.zeros((n, n_tokens))
    for t in range(n_tokens):
        uni[:, t] = (arr == t).sum(axis=1)
    left, right = arr[:, :-1], arr[:, 1:]
    valid = (left >= 0) & (right >= 0)
    code = np.where(valid, left * n_tokens + right, -1)
    bi = np.zeros((n, n_tokens * n_tokens))
    for c in range(n_tokens * n_tokens):
        bi[:, c] = (code == c).sum(axis=1)
    return np.hstack([uni, bi]) / max_len


@dataclass
class EnsembleConfig:
    n_members: int = 5
    hidden: int = 64
    epochs: int = 300
    lr: float = 1e-2
    seed: int = 0


def _train_member(feats, targets, cfg, seed):
    gen = torch.Generator().manual_seed(seed)
    d, m = feats.shape[1], targets.shape[1]
    w1 = (torch.rand(d, cfg.hidden, generator=gen, dtype=torch.float64) * 2 - 1) / np.sqrt(d)
    b1 = torch.zeros(cfg.hidden, dtype=torch.float64)
    w2 = (torch.rand(cfg.hidden, m, generator=gen, dtype=torch.float64) * 2 - 1) / np.sqrt(cfg.hidden)
    b2 = torch.tensor(targets.mean(axis=0), dtype=torch.float64)
    params = [p.requires_grad_() for p in (w1, b1, w2, b2)]
    x = torch.tensor(feats)
    y = torch.tensor(targets)
    opt = torch.optim.Adam(params, lr=cfg.lr)
    losses = []
    for _ in range(cfg.epochs):
        opt.zero_grad()
        pred = torch.tanh(x @ w1 + b1) @ w2 + b2
        loss = ((pred - y) ** 2).mean()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    with torch.no_grad():
        pred = torch.tanh(x @ w1 + b1) @ w2 + b2
        losses.append(((pred - y) ** 2).mean().item())
    return [p.detach().numpy().copy() for p in params], losses


class EnsembleSurrogate:
    """Bootstrap ensemble of one-hidden-layer MLPs over k-mer features."""

    is_deterministic = False

    def __init__(self, members, n_tokens, max_len, cfg, losses=None):
        if len(members) < 2:
            raise ContractError("an ensemble needs at least two members")
        self.members = members
        self.n_tokens = n_tokens
        self.max_len = max_len
        self.cfg = cfg
        self.losses = losses or []
        self.n_objectives = members[0][3].shape[0]

    def member_predictions(self, xs):
        f = kmer_features(list(xs), self.n_tokens, self.max_len)
        return np.stack([np.tanh(f @ w1 + b1) @ w2 + b2 for w1, b1, w2, b2 in self.members])

    def mean_std(self, xs):
        preds = self.member_predictions(xs)
        return preds.mean(axis=0), preds.std(axis=0)

    def predict(self, xs):
        return self.mean_std(xs)[0]

    def ucb(self, xs, beta):
        mean, std = self.mean_std(xs)
        return mean + beta * std

    def save(self, path):
        arrays = {f"m{i}_{j}": a for i, mem in enumerate(self.members) for j, a in enumerate(mem)}
        meta = {"version": CHECKPOINT_VERSION, "kind": "ensemble", "n_tokens": self.n_tokens,
                "max_len": self.max_len, "n_members": len(self.members),
                "config": self.cfg.__dict__}
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "ensemble":
                raise ValueError(f"unsupported surrogate checkpoint {meta.get('kind')} v{meta.get('version')}")
            members = [[data[f"m{i}_{j}"] for j in range(4)] for i in range(meta["n_members"])]
        return cls(members, meta["n_tokens"], meta["max_len"], EnsembleConfig(**meta["config"]))


def fit_ensemble(xs, ys, n_tokens, max_len, cfg=None):
    """Fit each member on its own bootstrap resample with its own seed."""
    cfg = cfg or EnsembleConfig()
    if len(xs) < 2 or len(xs) != len(ys):
        raise ContractError("fitting needs at least two (candidate, objective) pairs")
    if cfg.n_members < 2:
        raise ContractError("an ensemble needs at least two members")
    feats = kmer_features(list(xs), n_tokens, max_len)
    targets = np.asarray(ys, dtype=np.float64)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_members)
    members, losses = [], []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, len(xs), size=len(xs))
        torch_seed = int(ss.generate_state(1)[0])
        params, hist = _train_member(feats[idx], targets[idx], cfg, torch_seed)
        members.append(params)
        losses.append(hist)
    return EnsembleSurrogate(members, n_tokens, max_len, cfg, losses)


# -- acquisition ---------------------------------------------------------------

def ucb_vector(surrogate, xs, beta):
    """Componentwise ``mean + beta * std`` across ensemble members."""
    if beta < 0:
        raise ContractError("beta must be non-negative")
    return surrogate.ucb(list(xs), beta)


def sum_dispersion(cands, width=None):
    """Sum of pairwise Hamming distances over unordered pairs."""
    cands = list(cands)
    if len(cands) < 2:
        return 0.0
    width = width or max(len(x) for x in cands)
    d = hamming_matrix(cands, cands, width)
    return float(d.sum()) / 2.0


@dataclass
class AcquisitionContext:
    """A batch acquisition function ``a: subsets of X -> R``.

    ``archive`` holds objective vectors of already-evaluated candidates;
    ``prev`` holds the evaluated candidates themselves for the diversity term.
    """

    surrogate: object
    ref: np.ndarray
    width: int
    archive: np.ndarray = None
    beta: float = 0.0
    lam: float = 0.0
    prev: list = field(default_factory=list)
    mode: str = "plain"
    feature_beta: float = FEATURE_BETA

    def __post_init__(self):
        self.ref = np.asarray(self.ref, dtype=np.float64).reshape(-1)
        m = self.ref.size
        if self.archive is None or len(self.archive) == 0:
            self.archive = np.zeros((0, m))
        else:
            self.archive = np.asarray(self.archive, dtype=np.float64).reshape(-1, m)
        if self.mode not in MODES:
            raise ContractError(f"unknown acquisition mode {self.mode!r}")
        if self.beta < 0 or self.lam < 0:
            raise ContractError("beta and lambda must be non-negative")
        self._archive_hv = pareto.hypervolume(self.archive, self.ref)

    @property
    def n_objectives(self):
        return self.ref.size

    def with_mode(self, mode):
        return AcquisitionContext(self.surrogate, self.ref, self.width, self.archive, self.beta,
                                  self.lam, list(self.prev), mode, self.feature_beta)

    def images(self, xs):
        """Objective vectors used inside HVI (UCB vectors for ensembles)."""
        xs = list(xs)
        if not xs:
            return np.zeros((0, self.n_objectives))
        if getattr(self.surrogate, "is_deterministic", True):
            return self.surrogate.predict(xs)
        return self.surrogate.ucb(xs, self.beta)

    def features(self, xs):
        """Conditioning features for the set encoder."""
        xs = list(xs)
        if not xs:
            return np.zeros((0, self.n_objectives))
        if getattr(self.surrogate, "is_deterministic", True):
            return self.surrogate.predict(xs)
        return self.surrogate.ucb(xs, self.feature_beta)

    def hvi(self, batch):
        imgs = self.images(batch)
        if not len(imgs):
            return 0.0
        total = pareto.hypervolume(np.vstack([self.archive, imgs]), self.ref)
        return max(total - self._archive_hv, 0.0)

    def _diversity(self, batch):
        if self.lam == 0.0 or not batch:
            return 0.0
        div = sum_dispersion(batch, self.width)
        aux = float(hamming_matrix(batch, self.prev, self.width).sum()) if self.prev else 0.0
        return self.lam * (div + aux)

    def value(self, batch):
        batch = _dedup(batch)
        s = self.hvi(batch)
        if self.mode == "plain":
            return s
        if self.mode == "guide":
            s = s / 2.0
        return s + self._diversity(batch)

    def gains(self, xs, batch, batch_images=None):
        """Marginal gains ``a(B + {x}) - a(B)`` for each ``x``; members of B get 0."""
        xs = list(xs)
        batch = _dedup(batch)
        if not xs:
            return np.zeros(0)
        if batch_images is None:
            batch_images = self.images(batch)
        front = np.vstack([self.archive, batch_images]) if len(batch_images) else self.archive
        imgs = self.images(xs)
        uniq, inverse = np.unique(imgs, axis=0, return_inverse=True)
        g = pareto.hv_gains(front, uniq, self.ref)[inverse.reshape(-1)]
        if self.mode == "guide":
            g = g / 2.0
        if self.mode != "plain" and self.lam > 0.0:
            d = np.zeros(len(xs))
            if batch:
                d += hamming_matrix(xs, batch, self.width).sum(axis=1)
            if self.prev:
                d += hamming_matrix(xs, self.prev, self.width).sum(axis=1)
            g = g + self.lam * d
        if batch:
            members = set(batch)
            g = np.where([x in members for x in xs], 0.0, g)
        return g


def acq_value(ctx, batch):
    return ctx.value(batch)


def _dedup(batch):
    seen = set()
    out = []
    for x in batch:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def make_context(task_or_surrogate, space, ref=None, **kwargs):
    """Plain-HVI context over a task (deterministic) or fitted surrogate."""
    sur = task_or_surrogate
    if not hasattr(sur, "predict"):
        sur = DeterministicSurrogate.from_task(sur)
    if ref is None:
        ref = np.zeros(sur.n_objectives)
    return AcquisitionContext(sur, ref, space.max_len, **kwargs)


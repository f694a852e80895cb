"""Executable checks of the greedy approximation guarantees.

Everything here works on tiny enumerable ground sets: the submodularity ratio
is an exact double enumeration and the optimal n-subset is found by brute
force, so a reported violation means a real bug rather than estimation noise.
"""

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from moco_greedy import pareto
from moco_greedy.acquisition import make_context, sum_dispersion
from moco_greedy.selection.greedy import RandomSearch, approx_greedy, exact_greedy
from moco_greedy.tasks import (
    ContractError,
    EnumerationCapError,
    SequenceSpace,
    enumerate_space,
    make_bigram_task,
)

# subsets visited by one submodularity-ratio or optimum search
THEORY_CAP = 2_000_000
# absolute slack below which a set-function difference counts as zero
ZERO_TOL = 1e-12


class CachedSetFunction:
    """Memoise a set function on the frozenset of its argument."""

    def __init__(self, fn):
        self.fn = fn
        self.cache = {}

    def __call__(self, items):
        key = frozenset(items)
        v = self.cache.get(key)
        if v is None:
            v = self.cache[key] = float(self.fn(_ordered(key)))
        return v


def _ordered(items):
    try:
        return sorted(items)
    except TypeError:
        return list(items)


def hvi_set_function(images, archive, ref):
    """HVI over an archive as a set function of ground elements.

    ``images`` maps each element to its objective vector. Values are cached on
    the image multiset, since the volume only depends on images.
    """
    ref = np.asarray(ref, dtype=np.float64)
    archive = np.asarray(archive, dtype=np.float64).reshape(-1, ref.size)
    base = pareto.hypervolume(archive, ref)
    keys = {x: tuple(np.asarray(v, dtype=np.float64)) for x, v in images.items()}
    cache = {}

    def value(items):
        key = frozenset(keys[x] for x in items)
        v = cache.get(key)
        if v is None:
            pts = np.vstack([archive, np.array(sorted(key)).reshape(-1, ref.size)])
            v = cache[key] = pareto.hypervolume(pts, ref) - base
        return v

    return CachedSetFunction(value)


def dispersion_set_function(width=None):
    return CachedSetFunction(lambda items: sum_dispersion(items, width))


def combine(*terms):
    """Weighted sum of set functions, given as ``(weight, fn)`` pairs."""
    return CachedSetFunction(lambda items: sum(w * f(items) for w, f in terms))


def _ratio_size(n_ground, b_size, n):
    return 2**b_size * sum(math.comb(n_ground, s) for s in range(1, n + 1))


def submodularity_ratio(a, ground, B, n, cap=THEORY_CAP, tol=ZERO_TOL):
    """Exact submodularity ratio of ``a`` at ``(B, n)`` over ``ground``.

    Minimum over S with ``1 <= |S| <= n`` and ``B' ⊆ B \\ S`` of
    ``sum_{x in S} Δ(x|B') / (a(B' ∪ S) - a(B'))``, with ``0/0 := 1``.
    Differences within ``tol`` of zero count as zero.
    """
    ground = list(dict.fromkeys(ground))
    B = list(dict.fromkeys(B))
    if n < 1:
        raise ContractError("n must be at least 1")
    size = _ratio_size(len(ground), len(B), n)
    if size > cap:
        raise EnumerationCapError(size, cap)
    a = a if isinstance(a, CachedSetFunction) else CachedSetFunction(a)
    best = 1.0
    for r in range(len(B) + 1):
        for sub in combinations(B, r):
            base_set = frozenset(sub)
            base = a(base_set)
            rest = [x for x in ground if x not in base_set]
            delta = {x: a(base_set | {x}) - base for x in rest}
            for s in range(1, n + 1):
                for S in combinations(rest, s):
                    num = sum(delta[x] for x in S)
                    den = a(base_set.union(S)) - base
                    num = 0.0 if abs(num) <= tol else num
                    if abs(den) <= tol:
                        # 0/0 := 1; a positive numerator over zero is unbounded
                        continue
                    best = min(best, num / den)
    return best


def best_subset(a, ground, n, cap=THEORY_CAP):
    """Brute-force maximiser of ``a`` over subsets of size ``min(n, |ground|)``."""
    ground = list(dict.fromkeys(ground))
    k = min(n, len(ground))
    size = math.comb(len(ground), k)
    if size > cap:
        raise EnumerationCapError(size, cap)
    best_v, best_s = -np.inf, None
    for combo in combinations(ground, k):
        v = a(combo)
        if v > best_v:
            best_v, best_s = v, list(combo)
    return best_v, best_s


@dataclass
class BoundReport:
    theorem: str
    instance: dict
    n: int
    alpha: float
    gamma: float
    achieved: float
    optimal: float
    bound: float
    slack: float
    subset: list = field(default_factory=list)
    optimum: list = field(default_factory=list)

    @property
    def violated(self):
        return self.slack < -ZERO_TOL * max(1.0, abs(self.optimal))

    def to_row(self, decode=None):
        d = asdict(self)
        fmt = decode or str
        d["subset"] = " ".join(fmt(x) for x in self.subset)
        d["optimum"] = " ".join(fmt(x) for x in self.optimum)
        d["instance"] = ";".join(f"{k}={v}" for k, v in sorted(self.instance.items()))
        d["violated"] = int(self.violated)
        return d


def _alpha(trace, alpha_override):
    if alpha_override is not None:
        return float(alpha_override)
    alpha = trace.alpha
    if alpha is None:
        raise ContractError("trace lacks exact per-step maxima")
    return alpha


def verify_thm2(a, ground, trace, n, instance=None, alpha_override=None, gamma_scale=1.0,
                cap=THEORY_CAP):
    """Check ``a(B_n) >= (1 - exp(-alpha * gamma)) * a(B*_n)`` for one greedy run.

    ``alpha`` is the smallest per-step ratio recorded in ``trace`` and ``gamma``
    the submodularity ratio at the achieved set. ``alpha_override`` and
    ``gamma_scale`` replace the measured quantities, for testing the checker.
    """
    a = a if isinstance(a, CachedSetFunction) else CachedSetFunction(a)
    alpha = _alpha(trace, alpha_override)
    gamma = submodularity_ratio(a, ground, trace.subset, n, cap) * gamma_scale
    achieved = a(trace.subset)
    optimal, optimum = best_subset(a, ground, n, cap)
    factor = 1.0 - math.exp(-alpha * gamma)
    return BoundReport("thm2", dict(instance or {}), n, alpha, gamma, achieved, optimal, factor,
                       achieved - factor * optimal, list(trace.subset), optimum)


def verify_thm3(s, lam, ground, trace, n, width=None, instance=None, alpha_override=None,
                gamma_scale=1.0, cap=THEORY_CAP):
    """Check the non-oblivious bound for a run guided by ``s/2 + lam * div``.

    The objective is ``s + lam * div``; the bound factor is
    ``alpha * gamma_hat / 2`` with ``gamma_hat`` the submodularity ratio of ``s``
    at the union of the achieved and optimal sets.
    """
    s = s if isinstance(s, CachedSetFunction) else CachedSetFunction(s)
    obj = combine((1.0, s), (lam, dispersion_set_function(width)))
    alpha = _alpha(trace, alpha_override)
    achieved = obj(trace.subset)
    optimal, optimum = best_subset(obj, ground, n, cap)
    union = list(dict.fromkeys(list(trace.subset) + optimum))
    gamma = submodularity_ratio(s, ground, union, n, cap) * gamma_scale
    factor = alpha * gamma / 2.0
    return BoundReport("thm3", dict(instance or {}), n, alpha, gamma, achieved, optimal, factor,
                       achieved - factor * optimal, list(trace.subset), optimum)


def classic_bound(alpha=1.0, gamma=1.0):
    return 1.0 - math.exp(-alpha * gamma)


# -- random tiny instances ---------------------------------------------------

# (vocab, min_len, max_len); every shape keeps |X| small and the bigram
# denominator a power of two, so volumes are exact in floating point
TINY_SHAPES = (
    ("AB", 4, 4), ("AB", 3, 4), ("AB", 2, 4), ("ABC", 3, 3), ("ABCD", 2, 2),
    ("ABCD", 1, 2), ("ABC", 2, 2), ("AB", 2, 3), ("ABC", 1, 2),
)


@dataclass
class TinyInstance:
    task: object
    ground: list
    archive: np.ndarray
    n: int
    lam: float
    budget: int

    @property
    def space(self):
        return self.task.space

    def describe(self):
        sp = self.space
        return {"vocab": sp.vocab, "min_len": sp.min_len, "max_len": sp.max_len,
                "targets": "/".join(self.task.targets), "n": self.n, "lam": self.lam,
                "budget": self.budget, "archive": len(self.archive)}

    def context(self, mode="plain"):
        return make_context(self.task, self.space, archive=self.archive, lam=self.lam, mode=mode)

    def hvi(self):
        imgs = self.task.evaluate_many(self.ground)
        return hvi_set_function(dict(zip(self.ground, imgs)), self.archive,
                                np.zeros(self.task.n_objectives))


def random_instance(rng, max_ground=36, max_n=3, lam_range=(0.0, 0.2)):
    shapes = [sh for sh in TINY_SHAPES
              if SequenceSpace(*sh).size() <= max_ground]
    vocab, lo, hi = shapes[int(rng.integers(len(shapes)))]
    space = SequenceSpace(vocab, lo, hi)
    pairs = [a + b for a in vocab for b in vocab]
    m = int(rng.integers(2, 4))
    targets = [pairs[i] for i in rng.choice(len(pairs), m, replace=False)]
    task = make_bigram_task(vocab, lo, hi, targets)
    ground = list(enumerate_space(space))
    k = int(rng.integers(0, 3))
    archive = task.evaluate_many([ground[i] for i in rng.choice(len(ground), k, replace=False)])
    archive = np.asarray(archive).reshape(k, m)
    n = int(rng.integers(1, max_n + 1))
    lam = float(rng.uniform(*lam_range))
    budget = int(rng.integers(1, 9))
    return TinyInstance(task, ground, archive, n, lam, budget)


def check_thm2_instance(inst, rng, alpha_override=None, gamma_scale=1.0):
    """Random-search greedy on plain HVI, then the 1 - exp(-alpha gamma) bound check."""
    trace = approx_greedy(inst.context(), inst.space, inst.n, RandomSearch(), inst.budget, rng,
                          exact_reference=True)
    return verify_thm2(inst.hvi(), inst.ground, trace, inst.n, inst.describe(),
                       alpha_override, gamma_scale)


def check_thm3_instance(inst, rng, alpha_override=None, gamma_scale=1.0):
    """Random-search greedy on the halved guide, then the non-oblivious check."""
    trace = approx_greedy(inst.context("guide"), inst.space, inst.n, RandomSearch(),
                          inst.budget, rng, exact_reference=True)
    return verify_thm3(inst.hvi(), inst.lam, inst.ground, trace, inst.n,
                       inst.space.max_len, inst.describe(), alpha_override, gamma_scale)


def check_exact_instance(inst):
    """Exact greedy on plain HVI: the submodular, alpha = 1 corner."""
    trace = exact_greedy(inst.context(), inst.space, inst.n, ground=inst.ground)
    return verify_thm2(inst.hvi(), inst.ground, trace, inst.n, inst.describe())

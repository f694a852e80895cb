"""Exact greedy, approximated greedy and greedy sampling from a policy."""

from dataclasses import dataclass, field

import numpy as np
import torch

from moco_greedy.policy import Policy, reinforce_step
from moco_greedy.tasks import ENUMERATION_CAP, ContractError, enumerate_space

# relative slack under which two marginal gains count as tied
TIE_RTOL = 1e-12


@dataclass
class StepRecord:
    candidate: tuple
    gain: float
    best_gain: float = None
    stalled: bool = False

    @property
    def alpha(self):
        """Ratio of achieved to exact-best gain (``0/0 := 1``)."""
        if self.best_gain is None:
            return None
        if self.best_gain <= 0.0:
            return 1.0
        return min(max(self.gain / self.best_gain, 0.0), 1.0)


@dataclass
class GreedyTrace:
    steps: list = field(default_factory=list)
    subset: list = field(default_factory=list)
    value: float = 0.0
    queries: int = 0

    @property
    def gains(self):
        return [s.gain for s in self.steps if not s.stalled]

    @property
    def alpha(self):
        """Smallest per-step approximation ratio, or None without exact maxima.

        A stalled step counts with gain zero.
        """
        ratios = [s.alpha for s in self.steps]
        if not ratios or any(r is None for r in ratios):
            return None
        return min(ratios)

    def to_rows(self, decode=None):
        rows = []
        for i, s in enumerate(self.steps):
            rows.append({"step": i, "candidate": decode(s.candidate) if decode else s.candidate,
                         "gain": s.gain, "best_gain": s.best_gain, "alpha": s.alpha,
                         "stalled": s.stalled})
        return rows


class _Enumerated:
    """Cache of the enumerated ground set, in lexicographic order."""

    _cache = {}

    @classmethod
    def get(cls, space, cap):
        key = (space, cap)
        if key not in cls._cache:
            cls._cache.clear()
            cls._cache[key] = list(enumerate_space(space, cap))
        return cls._cache[key]


def ground_set(space, cap=ENUMERATION_CAP):
    return _Enumerated.get(space, cap)


def _pick(gains, excluded, tie, rng):
    """Index of the best non-excluded gain; ties broken by index or at random."""
    g = np.where(excluded, -np.inf, gains)
    best = g.max()
    if not np.isfinite(best):
        return None
    tol = TIE_RTOL * max(1.0, abs(best))
    ties = np.flatnonzero(g >= best - tol)
    if tie == "random":
        return int(rng.choice(ties))
    return int(ties[0])


def exact_step(acq, cands, subset, tie="lex", rng=None):
    """Exact argmax of the marginal gain over ``cands`` minus ``subset``."""
    gains = acq.gains(cands, subset)
    members = set(subset)
    excluded = np.fromiter((x in members for x in cands), dtype=bool, count=len(cands))
    idx = _pick(gains, excluded, tie, rng)
    if idx is None:
        return None, 0.0
    return cands[idx], float(gains[idx])


def exact_greedy(acq, space, n, tie="lex", rng=None, cap=ENUMERATION_CAP, ground=None):
    """Greedy subset selection with exact per-step maximization over the space.

    ``tie="lex"`` keeps the lexicographically smallest maximizer;
    ``tie="random"`` draws uniformly among maximizers using ``rng``.
    """
    if n < 1:
        raise ContractError("cardinality must be at least 1")
    if tie == "random" and rng is None:
        raise ContractError("random tie-breaking needs an rng")
    cands = list(ground) if ground is not None else ground_set(space, cap)
    trace = GreedyTrace()
    for _ in range(n):
        x, g = exact_step(acq, cands, trace.subset, tie, rng)
        trace.queries += len(cands)
        if x is None:
            break
        trace.steps.append(StepRecord(x, g, g))
        trace.subset.append(x)
    trace.value = acq.value(trace.subset)
    return trace


@dataclass(frozen=True)
class SubsetProblem:
    """Cardinality-constrained maximization of an acquisition over a space."""

    acquisition: object
    space: object
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("cardinality must be at least 1")


# -- inner maximizers --------------------------------------------------------

class RandomSearch:
    """Best of ``budget`` uniformly drawn candidates."""

    name = "rs"

    def maximize(self, acq, space, subset, budget, rng):
        xs = space.sample_uniform(rng, budget)
        gains = acq.gains(xs, subset)
        members = set(subset)
        excluded = np.array([x in members for x in xs])
        idx = _pick(gains, excluded, "lex", rng)
        if idx is None:
            return None, 0.0, budget
        return xs[idx], float(gains[idx]), budget


def _neighbours(x, n_tokens):
    out = []
    for pos in range(len(x)):
        for t in range(n_tokens):
            if t != x[pos]:
                out.append(x[:pos] + (t,) + x[pos + 1:])
    return out


class HillClimb:
    """Steepest ascent over single-substitution neighbourhoods with random restarts."""

    name = "hc"

    def maximize(self, acq, space, subset, budget, rng):
        members = set(subset)
        best, best_gain, used = None, -np.inf, 0
        while used < budget:
            x = space.sample_uniform(rng, 1)[0]
            g = float(acq.gains([x], subset)[0])
            used += 1
            if x not in members and g > best_gain:
                best, best_gain = x, g
            while used < budget:
                nb = _neighbours(x, space.n_tokens)[:budget - used]
                gains = acq.gains(nb, subset)
                used += len(nb)
                excluded = np.array([y in members for y in nb])
                idx = _pick(gains, excluded, "lex", rng)
                if idx is None:
                    break
                if gains[idx] > best_gain:
                    best, best_gain = nb[idx], float(gains[idx])
                if gains[idx] > g:
                    x, g = nb[idx], float(gains[idx])
                else:
                    break
        if best is None:
            return None, 0.0, used
        return best, best_gain, used


class ReinforceMaximizer:
    """Fresh policy trained by REINFORCE on the current marginal gain.

    ``updates * episodes`` queries go to training; the rest of the budget is
    spent on samples from the trained policy. The best candidate seen in any
    query is returned.
    """

    name = "rl"

    def __init__(self, n_objectives, updates, episodes=128, lr=1e-3, hidden=32, p_rand=0.0,
                 eps=1e-8, optimizer="adam"):
        self.n_objectives = n_objectives
        self.updates = updates
        self.episodes = episodes
        self.lr = lr
        self.hidden = hidden
        self.p_rand = p_rand
        self.eps = eps
        if optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {optimizer!r}")
        self.optimizer = optimizer

    def maximize(self, acq, space, subset, budget, rng):
        pol = Policy(space, self.n_objectives, hidden=self.hidden, seed=int(rng.integers(2**31)))
        members = set(subset)
        feats = acq.features(subset)
        best, best_gain, used = None, -np.inf, 0

        def consider(xs, gains):
            nonlocal best, best_gain
            for x, g in zip(xs, gains):
                if x not in members and g > best_gain:
                    best, best_gain = x, float(g)

        opt = torch.optim.Adam(pol.net.parameters(), lr=self.lr) if self.optimizer == "adam" else None
        updates = min(self.updates, max(budget - 1, 0) // self.episodes)
        for _ in range(updates):
            trajs = pol.sample(feats, self.episodes, rng, self.p_rand)
            xs = [t.candidate for t in trajs]
            r = acq.gains(xs, subset)
            used += len(xs)
            consider(xs, r)
            reinforce_step(pol, xs, r, feats, self.lr, self.eps, opt)
        rest = budget - used
        if rest > 0:
            xs = [t.candidate for t in pol.sample(feats, rest, rng, 0.0)]
            consider(xs, acq.gains(xs, subset))
            used += rest
        if best is None:
            return None, 0.0, used
        return best, best_gain, used


def make_maximizer(name, **kwargs):
    if name == "rs":
        return RandomSearch()
    if name == "hc":
        return HillClimb()
    if name == "rl":
        return ReinforceMaximizer(**kwargs)
    raise ContractError(f"unknown maximizer {name!r}")


def approx_greedy(acq, space, n, maximizer, budget, rng, exact_reference=False,
                  cap=ENUMERATION_CAP):
    """Greedy selection where each step is solved by ``maximizer`` within ``budget`` queries.

    With ``exact_reference`` the exact per-step maximum is also recorded, so
    the trace carries the realised approximation ratio.
    """
    if budget < 1:
        raise ContractError("per-step budget must be at least 1")
    if n < 1:
        raise ContractError("cardinality must be at least 1")
    cands = ground_set(space, cap) if exact_reference else None
    trace = GreedyTrace()
    for _ in range(n):
        x, g, used = maximizer.maximize(acq, space, trace.subset, budget, rng)
        trace.queries += used
        best = None
        if exact_reference:
            _, best = exact_step(acq, cands, trace.subset)
        if x is None:
            trace.steps.append(StepRecord(None, 0.0, best, stalled=True))
            continue
        trace.steps.append(StepRecord(x, g, best))
        trace.subset.append(x)
    trace.value = acq.value(trace.subset)
    return trace


def greedy_sample(acq, policy, k, l, rng, p_rand=0.0):
    """Greedy sampling: ``k`` rounds of best-of-``l`` draws from the conditioned policy.

    A draw already in the subset has zero gain; the best non-member is kept,
    and a round where all ``l`` draws are members is recorded as stalled.
    """
    if k < 0 or l < 1:
        raise ContractError("need k >= 0 and l >= 1")
    trace = GreedyTrace()
    for _ in range(k):
        trajs = policy.sample(acq.features(trace.subset), l, rng, p_rand)
        xs = [t.candidate for t in trajs]
        gains = acq.gains(xs, trace.subset)
        trace.queries += l
        members = set(trace.subset)
        excluded = np.array([x in members for x in xs])
        if excluded.all():
            trace.steps.append(StepRecord(xs[0], 0.0, stalled=True))
            continue
        idx = _pick(gains, excluded, "lex", rng)
        trace.steps.append(StepRecord(xs[idx], float(gains[idx])))
        trace.subset.append(xs[idx])
    trace.value = acq.value(trace.subset)
    return trace

"""Dominance, non-dominated sorting, exact hypervolume and improvements.

Objective vectors are in maximization orientation. Hypervolume is exact for
up to four objectives and is computed by the compiled WFG kernel when it is
available, otherwise by the numpy fallback. Set ``MOCO_GREEDY_PURE_PYTHON=1``
to force the fallback.
"""

import os

import numpy as np

from moco_greedy.pareto import _hv_py

MAX_OBJECTIVES = 4

if os.environ.get("MOCO_GREEDY_PURE_PYTHON") == "1":
    _kernel = _hv_py
else:
    try:
        from moco_greedy.pareto import _hvcore as _kernel
    except ImportError:  # pragma: no cover - depends on the build
        _kernel = _hv_py

BACKEND = "cython" if _kernel is not _hv_py else "python"


class DimensionError(ValueError):
    """Raised for mismatched or unsupported objective dimensions."""


def _as_points(points, m=None):
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, m or 0))
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-d array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("objective vectors must be finite")
    if m is not None and arr.shape[1] != m:
        raise DimensionError(f"points have {arr.shape[1]} objectives, reference has {m}")
    return arr


def _as_ref(ref):
    r = np.asarray(ref, dtype=np.float64).reshape(-1)
    if r.size == 0:
        raise DimensionError("reference point must have at least one objective")
    if not np.all(np.isfinite(r)):
        raise ValueError("reference point must be finite")
    if r.size > MAX_OBJECTIVES:
        raise DimensionError(
            f"exact hypervolume supports at most {MAX_OBJECTIVES} objectives, got {r.size}")
    return r


def _shift(points, ref):
    """Shift by ``ref`` and keep rows that strictly dominate it."""
    q = points - ref
    return q[np.all(q > 0.0, axis=1)]


def dominates(a, b):
    """True iff ``a`` is componentwise >= ``b`` and differs somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare vectors of shapes {a.shape} and {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def non_dominated_mask(points):
    """Boolean mask of rows not dominated by any other row (duplicates kept)."""
    y = _as_points(points)
    if y.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    ge = np.all(y[:, None, :] >= y[None, :, :], axis=2)
    gt = np.any(y[:, None, :] > y[None, :, :], axis=2)
    return ~np.any(ge & gt, axis=0)


def non_dominated_sort(points):
    """Partition row indices into successive non-dominated fronts.

    Returns a list of integer index arrays; front 0 holds the rows dominated
    by no other row, each later front is the non-dominated set of what is left.
    """
    y = _as_points(points)
    remaining = np.arange(y.shape[0])
    fronts = []
    while remaining.size:
        mask = non_dominated_mask(y[remaining])
        fronts.append(remaining[mask])
        remaining = remaining[~mask]
    return fronts


def hypervolume(points, ref):
    """Exact volume dominated by ``points`` and bounded below by ``ref``.

    Points that do not strictly dominate ``ref`` contribute nothing.
    """
    r = _as_ref(ref)
    y = _as_points(points, r.size)
    if y.shape[0] == 0:
        return 0.0
    q = _shift(y, r)
    if q.shape[0] == 0:
        return 0.0
    return float(_kernel.hypervolume(q))


def hvi(batch, archive, ref):
    """Hypervolume gained by adding ``batch`` to ``archive``."""
    r = _as_ref(ref)
    b = _as_points(batch, r.size)
    a = _as_points(archive, r.size)
    if b.shape[0] == 0:
        return 0.0
    base = hypervolume(a, r)
    return max(hypervolume(np.vstack([a, b]), r) - base, 0.0)


def marginal_hvi(x_img, batch, archive, ref):
    """Gain in HVI from adding a single image ``x_img`` to ``batch``."""
    r = _as_ref(ref)
    x = _as_points(x_img, r.size)
    front = np.vstack([_as_points(archive, r.size), _as_points(batch, r.size)])
    return float(hv_gains(front, x, r)[0])


def hv_gains(front, cands, ref):
    """Marginal hypervolume of each candidate row added alone to ``front``."""
    r = _as_ref(ref)
    c = _as_points(cands, r.size)
    if c.shape[0] == 0:
        return np.zeros(0)
    f = _shift(_as_points(front, r.size), r)
    return np.asarray(_kernel.hv_gains(f, c - r), dtype=np.float64)


def hypervolume_mc(points, ref, n_samples=1_000_000, rng=None, chunk=100_000):
    """Monte-Carlo hypervolume estimate and its standard error.

    Samples uniformly in the bounding box of ``ref`` and the componentwise
    maximum of the points. Intended as an independent cross-check only.
    """
    r = _as_ref(ref)
    y = _as_points(points, r.size)
    q = _shift(y, r)
    if q.shape[0] == 0:
        return 0.0, 0.0
    rng = np.random.default_rng(rng)
    upper = q.max(axis=0)
    box = float(np.prod(upper))
    hits = 0
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        u = rng.random((k, r.size)) * upper
        covered = np.zeros(k, dtype=bool)
        for p in q:
            covered |= np.all(u <= p, axis=1)
        hits += int(covered.sum())
        done += k
    frac = hits / n_samples
    est = box * frac
    sigma = box * np.sqrt(max(frac * (1.0 - frac), 0.0) / n_samples)
    return est, sigma


__all__ = [
    "BACKEND",
    "DimensionError",
    "MAX_OBJECTIVES",
    "dominates",
    "hv_gains",
    "hvi",
    "hypervolume",
    "hypervolume_mc",
    "marginal_hvi",
    "non_dominated_mask",
    "non_dominated_sort",
]

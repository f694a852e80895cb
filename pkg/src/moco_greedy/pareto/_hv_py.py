"""Pure-numpy hypervolume kernel (fallback for the compiled core).

All routines work on *shifted* points ``q = y - ref`` in maximization
orientation: the volume of interest is the union of boxes ``[0, q]``.
Callers are responsible for dropping rows with any coordinate ``<= 0``.
"""

import numpy as np


def _nondominated(q):
    """Drop dominated rows and exact duplicates (maximization)."""
    n = q.shape[0]
    if n <= 1:
        return q
    ge = np.all(q[:, None, :] >= q[None, :, :], axis=2)
    eq = np.all(q[:, None, :] == q[None, :, :], axis=2)
    # row j is removed if some i dominates it, or an identical row precedes it
    strict = ge & ~eq
    earlier_dup = np.triu(eq, k=1)
    keep = ~(strict.any(axis=0) | earlier_dup.any(axis=0))
    return q[keep]


def _hv2d(q):
    order = np.lexsort((-q[:, 1], -q[:, 0]))
    x = q[order, 0]
    y = q[order, 1]
    prev = np.maximum.accumulate(np.concatenate(([0.0], y[:-1])))
    return float(np.sum(x * np.maximum(y - prev, 0.0)))


def _wfg(q):
    n, m = q.shape
    if n == 0:
        return 0.0
    if n == 1:
        return float(np.prod(q[0]))
    if m == 1:
        return float(q[:, 0].max())
    if m == 2:
        return _hv2d(q)
    q = q[np.argsort(-q[:, 0], kind="stable")]
    total = 0.0
    for k in range(n):
        p = q[k]
        rest = q[k + 1:]
        total += float(np.prod(p))
        if rest.shape[0]:
            total -= _wfg(_nondominated(np.minimum(rest, p)))
    return total


def hypervolume(q):
    """Volume of the union of boxes ``[0, q_i]`` for positive rows of ``q``."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.shape[0] == 0:
        return 0.0
    return _wfg(_nondominated(q))


def hv_gains(base, cands):
    """Exclusive contribution of each candidate row against ``base``.

    ``base`` rows must be positive; candidate rows with a non-positive
    coordinate contribute zero.
    """
    base = np.ascontiguousarray(base, dtype=np.float64)
    cands = np.ascontiguousarray(cands, dtype=np.float64)
    out = np.zeros(cands.shape[0])
    if base.shape[0]:
        base = _nondominated(base)
    for i, c in enumerate(cands):
        if np.any(c <= 0.0):
            continue
        vol = float(np.prod(c))
        if base.shape[0]:
            lim = _nondominated(np.minimum(base, c))
            vol -= _wfg(lim)
        out[i] = max(vol, 0.0)
    return out

"""Independent brute-force oracles shared by the test-suite.

Nothing here calls the library's hypervolume or greedy code paths.
"""

from itertools import combinations, product

import numpy as np


def hv_inclusion_exclusion(points, ref):
    """Exact union volume by inclusion-exclusion over all point subsets."""
    ref = np.asarray(ref, dtype=float)
    pts = [np.asarray(p, dtype=float) for p in points]
    pts = [p for p in pts if np.all(p > ref)]
    total = 0.0
    for k in range(1, len(pts) + 1):
        sign = 1.0 if k % 2 else -1.0
        for combo in combinations(pts, k):
            corner = np.min(np.stack(combo), axis=0)
            total += sign * float(np.prod(corner - ref))
    return total


def hv_grid(points, ref):
    """Exact union volume by summing cells of the coordinate grid."""
    ref = np.asarray(ref, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(-1, ref.size)
    pts = pts[np.all(pts > ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    axes = [np.unique(np.concatenate([[ref[d]], pts[:, d]])) for d in range(ref.size)]
    total = 0.0
    for cell in product(*[range(len(a) - 1) for a in axes]):
        hi = np.array([axes[d][i + 1] for d, i in enumerate(cell)])
        lo = np.array([axes[d][i] for d, i in enumerate(cell)])
        if np.any(np.all(pts >= hi, axis=1)):
            total += float(np.prod(hi - lo))
    return total


def pairwise_dominates(a, b):
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def fronts_by_peeling(points):
    """Non-dominated fronts via O(N^2 m) pairwise checks in pure Python."""
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(pairwise_dominates(points[j], points[i]) for j in remaining if j != i)]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def all_candidates(vocab_size, min_len, max_len):
    """Every sequence, enumerated with itertools.product then sorted."""
    out = []
    for L in range(min_len, max_len + 1):
        out.extend(product(range(vocab_size), repeat=L))
    return sorted(out)


def hvi_oracle(images, archive, ref):
    front = list(archive) + list(images)
    return hv_inclusion_exclusion(front, ref) - hv_inclusion_exclusion(list(archive), ref)


def brute_force_best_subset(value, ground, n):
    """Maximum of ``value`` over all subsets of size exactly ``min(n, |ground|)``."""
    best_v, best_s = -np.inf, None
    for combo in combinations(ground, min(n, len(ground))):
        v = value(list(combo))
        if v > best_v:
            best_v, best_s = v, list(combo)
    return best_v, best_s

"""Time the compiled and pure-Python hypervolume kernels on the same inputs.

    python3 benchmarks/bench_hv.py [--repeats 5] [--csv out.csv]

Both kernels take shifted points (reference at the origin). Results are
checked for agreement before any timing is reported.
"""

import argparse
import csv
import sys
import time

import numpy as np

from moco_greedy.pareto import _hv_py

try:
    from moco_greedy.pareto import _hvcore
except ImportError:
    _hvcore = None

CASES = [
    # (objectives, front size, candidates for the gain kernel)
    (2, 50, 1000),
    (2, 200, 1000),
    (3, 20, 500),
    (3, 50, 500),
    (4, 10, 200),
    (4, 20, 200),
]


def sphere_front(rng, n, m):
    """Mutually non-dominated points on the positive unit sphere."""
    x = np.abs(rng.normal(size=(n, m)))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="also write the table to this file")
    args = parser.parse_args(argv)
    if _hvcore is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    rows = []
    for m, n, k in CASES:
        front = sphere_front(rng, n, m)
        cands = rng.random((k, m))
        for kernel, call in (("hypervolume", lambda mod: mod.hypervolume(front)),
                             ("hv_gains", lambda mod: mod.hv_gains(front, cands))):
            a, b = call(_hvcore), call(_hv_py)
            if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
                print(f"kernels disagree on m={m} n={n} {kernel}", file=sys.stderr)
                return 2
            t_c = best_time(lambda: call(_hvcore), args.repeats)
            t_p = best_time(lambda: call(_hv_py), args.repeats)
            rows.append({"kernel": kernel, "m": m, "points": n, "candidates": k if kernel == "hv_gains" else 0,
                         "cython_s": t_c, "python_s": t_p, "speedup": t_p / t_c})
    header = list(rows[0])
    print(f"{'kernel':<12}{'m':>3}{'points':>8}{'cands':>7}{'cython s':>12}{'python s':>12}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<12}{r['m']:>3}{r['points']:>8}{r['candidates']:>7}"
              f"{r['cython_s']:>12.5f}{r['python_s']:>12.5f}{r['speedup']:>9.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=header)
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())

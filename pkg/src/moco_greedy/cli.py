"""Command-line entry point: ``moco-greedy {subset,al,verify,oracle,hv}``."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from moco_greedy import __version__, pareto, theory
from moco_greedy.acquisition import make_context
from moco_greedy.active_learning import ALConfig, queries_to_target, run_active_learning
from moco_greedy.config import SCHEMA_VERSION, ConfigError, dump_config, load_config
from moco_greedy.seeding import derive_seed, rng_for
from moco_greedy.selection import ground_set
from moco_greedy.strategies import run_strategy
from moco_greedy.tasks import EnumerationCapError

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_CAP = 0, 1, 2, 3

log = logging.getLogger("moco_greedy")

SCHEMAS = {
    "trials.csv": ["strategy", "n", "trial", "seed", "hv", "queries", "subset"],
    "summary.csv": ["strategy", "n", "trials", "hv_mean", "hv_std"],
    "curves.csv": ["strategy", "trial", "round", "queries", "queries_with_init", "hv",
                   "relative_hv"],
    "percentiles.csv": ["strategy", "round", "queries", "hv_p30", "hv_p50", "hv_p70"],
    "queries_to_target.csv": ["strategy", "target", "reached", "queries_p50",
                              "queries_with_init_p50"],
    "bounds.csv": ["theorem", "index", "seed", "instance", "n", "alpha", "gamma", "achieved",
                   "optimal", "bound", "slack", "violated", "subset", "optimum"],
}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r[h]) for h in header])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _prepare_out(cfg, files):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    schema = {"version": SCHEMA_VERSION, "tool_version": __version__,
              "files": {name: SCHEMAS[name] for name in files}}
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    return out


def _ref(cfg, task):
    ref = cfg.acquisition.ref
    return np.zeros(task.n_objectives) if ref is None else np.asarray(ref, dtype=float)


def cmd_subset(cfg):
    """Single-round subset selection on the deterministic task objective."""
    task = cfg.task.build()
    out = _prepare_out(cfg, ["trials.csv", "summary.csv"])
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    acq = make_context(task, task.space, _ref(cfg, task), lam=cfg.acquisition.lam,
                       mode=cfg.acquisition.mode)
    rows, summary = [], []
    for strategy in cfg.strategies:
        for n in cfg.cardinalities:
            hvs = []
            for trial in range(cfg.trials):
                seed = derive_seed(cfg.seed, trial, "subset", strategy, n)
                res = run_strategy(strategy, acq, task.space, n, cfg.train,
                                   np.random.default_rng(seed), cfg.hidden, seed % 2**31)
                hvs.append(res.value)
                rows.append({"strategy": strategy, "n": n, "trial": trial, "seed": seed,
                             "hv": res.value, "queries": res.queries,
                             "subset": " ".join(task.space.decode(x) for x in res.subset)})
                stem = traces / f"{strategy}_n{n}_trial{trial}"
                if res.trace is not None:
                    tr = res.trace.to_rows(task.space.decode)
                    _write_csv(stem.with_suffix(".csv"), list(tr[0]) if tr else ["step"], tr)
                if res.log is not None and res.log.rows:
                    _write_csv(stem.with_suffix(".csv"), list(res.log.rows[0]), res.log.rows)
                log.info("%s n=%d trial=%d hv=%.6g", strategy, n, trial, res.value)
            summary.append({"strategy": strategy, "n": n, "trials": len(hvs),
                            "hv_mean": float(np.mean(hvs)), "hv_std": float(np.std(hvs))})
    _write_csv(out / "trials.csv", SCHEMAS["trials.csv"], rows)
    _write_csv(out / "summary.csv", SCHEMAS["summary.csv"], summary)
    return EXIT_OK


def _al_config(cfg, trial_seed):
    return ALConfig(rounds=cfg.al.rounds, batch=cfg.al.batch, n_init=cfg.al.n_init,
                    surrogate=cfg.surrogate.kind, beta=cfg.acquisition.beta,
                    lam=cfg.acquisition.lam, mode=cfg.acquisition.mode, hidden=cfg.hidden,
                    ensemble=cfg.surrogate.ensemble(trial_seed), train=cfg.train)


def _percentiles(values):
    return [float(v) for v in np.percentile(values, [30, 50, 70])]


def cmd_al(cfg, resume=False):
    """Multi-round active learning per strategy and trial."""
    task = cfg.task.build()
    out = _prepare_out(cfg, ["curves.csv", "percentiles.csv", "queries_to_target.csv"])
    ref = _ref(cfg, task)
    curves, per_strategy = [], {}
    for strategy in cfg.strategies:
        runs = []
        for trial in range(cfg.trials):
            # the initial dataset depends on the trial only, so strategies share it
            seed = derive_seed(cfg.seed, trial, "al")
            al_cfg = _al_config(cfg, derive_seed(seed, "ensemble"))
            _, metrics = run_active_learning(task, strategy, al_cfg, seed, ref,
                                             run_dir=out / "runs" / f"{strategy}_trial{trial}",
                                             resume=resume)
            runs.append(metrics)
            for m in metrics:
                curves.append({"strategy": strategy, "trial": trial, "round": m.round,
                               "queries": m.queries, "queries_with_init": m.queries_with_init,
                               "hv": m.hypervolume, "relative_hv": m.relative_hv})
        per_strategy[strategy] = runs
    pct = []
    for strategy, runs in per_strategy.items():
        for r in range(cfg.al.rounds + 1):
            hvs = [ms[r].hypervolume for ms in runs]
            q = int(np.median([ms[r].queries for ms in runs]))
            p30, p50, p70 = _percentiles(hvs)
            pct.append({"strategy": strategy, "round": r, "queries": q,
                        "hv_p30": p30, "hv_p50": p50, "hv_p70": p70})
    targets = cfg.al.targets
    if not targets:
        best = max(ms[-1].hypervolume for runs in per_strategy.values() for ms in runs)
        targets = [best * f for f in (0.5, 0.75, 0.9, 1.0)]
    qtt = []
    for strategy, runs in per_strategy.items():
        for t in targets:
            q = [queries_to_target(ms, t) for ms in runs]
            qi = [queries_to_target(ms, t, with_init=True) for ms in runs]
            hit = [v for v in q if v is not None]
            hit_i = [v for v in qi if v is not None]
            qtt.append({"strategy": strategy, "target": float(t), "reached": len(hit),
                        "queries_p50": float(np.median(hit)) if hit else "",
                        "queries_with_init_p50": float(np.median(hit_i)) if hit_i else ""})
    _write_csv(out / "curves.csv", SCHEMAS["curves.csv"], curves)
    _write_csv(out / "percentiles.csv", SCHEMAS["percentiles.csv"], pct)
    _write_csv(out / "queries_to_target.csv", SCHEMAS["queries_to_target.csv"], qtt)
    return EXIT_OK


def cmd_verify(cfg):
    """Fuzz tiny instances through the bound checks; exit 2 on any violation."""
    out = _prepare_out(cfg, ["bounds.csv"])
    v = cfg.verify
    checks = {"thm2": theory.check_thm2_instance, "thm3": theory.check_thm3_instance}
    rows, bad = [], []
    for name in v.theorems:
        for i in range(v.instances):
            seed = derive_seed(cfg.seed, i, "verify", name)
            rng = np.random.default_rng(seed)
            inst = theory.random_instance(rng, v.max_ground, v.max_n, (0.0, v.lam_max))
            rep = checks[name](inst, rng, v.alpha_override, v.gamma_scale)
            row = rep.to_row(inst.space.decode)
            row.update(index=i, seed=seed)
            rows.append(row)
            if rep.violated:
                bad.append(row)
    _write_csv(out / "bounds.csv", SCHEMAS["bounds.csv"], rows)
    if bad:
        vdir = out / "violations"
        vdir.mkdir(exist_ok=True)
        for row in bad:
            (vdir / f"{row['theorem']}_{row['index']}.json").write_text(
                json.dumps(row, indent=2, default=float) + "\n")
        log.error("%d bound violations; instances dumped to %s", len(bad), vdir)
        return EXIT_VIOLATION
    log.info("%d instances verified, no violations", len(rows))
    return EXIT_OK


def cmd_oracle(cfg):
    """Exact and Monte-Carlo HV of a front, and the brute-force optimum of the task."""
    out = _prepare_out(cfg, [])
    o = cfg.oracle
    report = {}
    if o.front is not None:
        front = np.asarray(o.front, dtype=float)
        ref = np.zeros(front.shape[1]) if o.ref is None else np.asarray(o.ref, dtype=float)
        exact = pareto.hypervolume(front, ref)
        est, sigma = pareto.hypervolume_mc(front, ref, o.samples, rng=rng_for(cfg.seed, "oracle"))
        report["front"] = {"exact": exact, "mc": est, "sigma": sigma}
        print(f"exact HV {exact:.10g}")
        print(f"Monte-Carlo HV {est:.10g} +/- {sigma:.3g}")
    else:
        task = cfg.task.build()
        ground = ground_set(task.space)
        f = theory.hvi_set_function(dict(zip(ground, task.evaluate_many(ground))),
                                    np.zeros((0, task.n_objectives)), _ref(cfg, task))
        reduced = _dominant_candidates(task, ground, _ref(cfg, task))
        best, subset = theory.best_subset(f, reduced, o.n)
        names = [task.space.decode(x) for x in subset]
        report["optimum"] = {"n": o.n, "value": best, "subset": names}
        print(f"optimal {o.n}-subset HV {best:.10g}")
        if len(names) < o.n:
            print(f"  ({o.n - len(names)} further members add nothing; any candidates do)")
        for s in names:
            print(f"  {s}")
    (out / "oracle.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def _dominant_candidates(task, ground, ref):
    """One representative per non-dominated image with positive volume.

    An optimal subset can always be built from these: swapping a member for
    a representative of a dominating image never lowers the volume.
    """
    imgs = task.evaluate_many(ground)
    uniq, first = np.unique(imgs, axis=0, return_index=True)
    keep = pareto.non_dominated_mask(uniq) & np.all(uniq > ref, axis=1)
    reps = [ground[i] for i in sorted(first[keep])]
    return reps or [ground[0]]


def cmd_hv(args):
    pts = np.asarray(json.loads(args.points), dtype=float)
    ref = np.zeros(pts.shape[1]) if args.ref is None else np.asarray(json.loads(args.ref), dtype=float)
    print(repr(pareto.hypervolume(pts, ref)))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="moco-greedy",
                                     description="Greedy batch selection for multi-objective "
                                                 "sequence design.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("subset", "single-round subset selection"),
                       ("al", "multi-round active learning"),
                       ("verify", "check approximation bounds on random tiny instances"),
                       ("oracle", "exact/Monte-Carlo HV and brute-force optima")):
        p = sub.add_parser(name, help=text, parents=[common])
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int)
        if name == "al":
            p.add_argument("--resume", action="store_true",
                           help="continue runs found in the output directory")
    p = sub.add_parser("hv", help="hypervolume of a JSON point list (debug)", parents=[common])
    p.add_argument("points", help='e.g. "[[3,1],[2,2],[1,3]]"')
    p.add_argument("--ref", help="JSON reference point (default: origin)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "hv":
            return cmd_hv(args)
        overrides = {"mode": args.command, "seed": args.seed, "trials": args.trials,
                     "out": args.out, "threads": args.threads}
        cfg = load_config(args.config, overrides)
        torch.set_num_threads(cfg.threads)
        if cfg.mode == "subset":
            return cmd_subset(cfg)
        if cfg.mode == "al":
            return cmd_al(cfg, args.resume)
        if cfg.mode == "verify":
            return cmd_verify(cfg)
        return cmd_oracle(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationCapError as err:
        print(f"resource cap: {err}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, pareto.DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

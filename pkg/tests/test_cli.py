import csv
import json

import pytest
import yaml

from moco_greedy.acquisition import make_context
from moco_greedy.cli import EXIT_CAP, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from moco_greedy.config import ConfigError, load_config
from moco_greedy.selection import exact_greedy
from moco_greedy.seeding import derive_seed
from moco_greedy.tasks import make_bigram_task

SMALL_TASK = {"vocab": "ABC", "min_len": 3, "max_len": 4, "targets": ["AB", "BC"]}
SMALL_TRAIN = {"n_updates": 4, "eval_period": 2, "n_episodes": 8, "eval_samples": 4}


def write_config(tmp_path, **doc):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestConfig:
    def test_defaults(self):
        cfg = load_config(environ={})
        assert cfg.mode == "subset" and cfg.train.n_updates == 2000

    def test_unknown_key_named(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            load_config(write_config(tmp_path, train={"n_update": 3}), environ={})
        assert err.value.key == "train.n_update"

    def test_bad_strategy(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            load_config(write_config(tmp_path, strategies=["magic"]), environ={})
        assert err.value.key == "strategies"

    def test_env_overrides_out_and_threads(self, tmp_path):
        path = write_config(tmp_path, out="a", threads=1, seed=4)
        cfg = load_config(path, environ={"MOCO_OUT": "b", "MOCO_THREADS": "2"})
        assert (cfg.out, cfg.threads, cfg.seed) == ("b", 2, 4)

    def test_flags_win(self, tmp_path):
        cfg = load_config(write_config(tmp_path, out="a"), {"out": "c", "seed": 9},
                          environ={"MOCO_OUT": "b"})
        assert (cfg.out, cfg.seed) == ("c", 9)

    def test_exit_code_on_bad_config(self, tmp_path, capsys):
        path = write_config(tmp_path, mode="subset", cardinalities=[0])
        assert main(["subset", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "cardinalities" in capsys.readouterr().err


def test_seed_fanout_is_stable():
    assert derive_seed(1, 0, "subset") == derive_seed(1, 0, "subset")
    assert derive_seed(1, 0, "subset") != derive_seed(1, 1, "subset")
    assert derive_seed(1, 0, "subset") != derive_seed(2, 0, "subset")


class TestSubset:
    def run(self, tmp_path, name, **extra):
        doc = dict(task=SMALL_TASK, train=SMALL_TRAIN, cardinalities=[2, 3], trials=3, **extra)
        out = tmp_path / name
        assert main(["subset", "--config", write_config(tmp_path, **doc), "--out", str(out)]) == EXIT_OK
        return out

    def test_rows_and_summary(self, tmp_path):
        out = self.run(tmp_path, "o", strategies=["greedy-rs", "ours"])
        rows = read_csv(out / "trials.csv")
        assert len(rows) == 2 * 2 * 3
        summary = read_csv(out / "summary.csv")
        assert len(summary) == 4 and all(r["trials"] == "3" for r in summary)
        schema = json.loads((out / "schema.json").read_text())
        assert schema["files"]["trials.csv"] == list(rows[0])
        assert (out / "config.yaml").exists()

    def test_byte_identical(self, tmp_path):
        a = self.run(tmp_path, "a", strategies=["greedy-hc", "pc-rl-ts"])
        b = self.run(tmp_path, "b", strategies=["greedy-hc", "pc-rl-ts"])
        assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()

    def test_exact_greedy_matches_library(self, tmp_path):
        out = self.run(tmp_path, "o", strategies=["exact-greedy"])
        task = make_bigram_task(**SMALL_TASK)
        trace = exact_greedy(make_context(task, task.space), task.space, 3)
        row = [r for r in read_csv(out / "trials.csv") if r["n"] == "3"][0]
        assert float(row["hv"]) == trace.value
        assert row["subset"] == " ".join(task.space.decode(x) for x in trace.subset)

    def test_resolved_config_reproduces(self, tmp_path):
        out = self.run(tmp_path, "o", strategies=["greedy-rs"])
        again = tmp_path / "again"
        assert main(["subset", "--config", str(out / "config.yaml"), "--out", str(again)]) == EXIT_OK
        assert (out / "trials.csv").read_bytes() == (again / "trials.csv").read_bytes()


class TestVerify:
    def test_clean_run(self, tmp_path):
        path = write_config(tmp_path, verify={"instances": 10})
        assert main(["verify", "--config", path, "--out", str(tmp_path / "v")]) == EXIT_OK
        rows = read_csv(tmp_path / "v" / "bounds.csv")
        assert len(rows) == 20 and all(r["violated"] == "0" for r in rows)

    def test_halved_gamma_passes(self, tmp_path):
        path = write_config(tmp_path, verify={"instances": 10, "gamma_scale": 0.5})
        assert main(["verify", "--config", path, "--out", str(tmp_path / "v")]) == EXIT_OK

    def test_inflated_alpha_caught(self, tmp_path):
        path = write_config(tmp_path, verify={"instances": 30, "alpha_override": 1.0,
                                              "theorems": ["thm2"]})
        assert main(["verify", "--config", path, "--out", str(tmp_path / "v")]) == EXIT_VIOLATION
        dumped = list((tmp_path / "v" / "violations").glob("thm2_*.json"))
        assert dumped
        rec = json.loads(dumped[0].read_text())
        assert rec["achieved"] < rec["bound"] * rec["optimal"]


class TestOracle:
    def test_unit_box(self, tmp_path, capsys):
        path = write_config(tmp_path, oracle={"front": [[1, 1]], "ref": [0, 0], "samples": 100000})
        assert main(["oracle", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_OK
        rep = json.loads((tmp_path / "o" / "oracle.json").read_text())["front"]
        assert rep["exact"] == 1.0
        assert abs(rep["mc"] - 1.0) <= 3 * rep["sigma"] + 1e-12

    def test_staircase(self, tmp_path):
        path = write_config(tmp_path, oracle={"front": [[3, 1], [2, 2], [1, 3]], "samples": 100000})
        main(["oracle", "--config", path, "--out", str(tmp_path / "o")])
        rep = json.loads((tmp_path / "o" / "oracle.json").read_text())["front"]
        assert rep["exact"] == pytest.approx(6.0)
        assert abs(rep["mc"] - 6.0) <= 3 * rep["sigma"]

    def test_task_optimum(self, tmp_path, capsys):
        path = write_config(tmp_path, task=SMALL_TASK, oracle={"n": 2})
        assert main(["oracle", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_OK
        rep = json.loads((tmp_path / "o" / "oracle.json").read_text())["optimum"]
        task = make_bigram_task(**SMALL_TASK)
        acq = make_context(task, task.space)
        assert rep["value"] == pytest.approx(acq.value([task.space.encode(s) for s in rep["subset"]]))
        assert "optimal 2-subset" in capsys.readouterr().out

    def test_cap(self, tmp_path):
        path = write_config(tmp_path, task={"preset": "bigrams-2"})
        assert main(["oracle", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CAP


def test_hv_debug(capsys):
    assert main(["hv", "[[3,1],[2,2],[1,3]]"]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(6.0)


class TestActiveLearning:
    def doc(self, **al):
        return dict(task=SMALL_TASK, train=SMALL_TRAIN, strategies=["greedy-rs", "exact-greedy"],
                    trials=3, surrogate={"kind": "deterministic"},
                    al=dict({"rounds": 2, "batch": 2, "n_init": 4}, **al))

    def test_outputs(self, tmp_path):
        path = write_config(tmp_path, **self.doc())
        assert main(["al", "--config", path, "--out", str(tmp_path / "a")]) == EXIT_OK
        curves = read_csv(tmp_path / "a" / "curves.csv")
        assert len(curves) == 2 * 3 * 3
        pct = read_csv(tmp_path / "a" / "percentiles.csv")
        for r in pct:
            assert float(r["hv_p30"]) <= float(r["hv_p50"]) <= float(r["hv_p70"])
        qtt = read_csv(tmp_path / "a" / "queries_to_target.csv")
        assert {r["strategy"] for r in qtt} == {"greedy-rs", "exact-greedy"}

    def test_resume_matches_uninterrupted(self, tmp_path):
        full = write_config(tmp_path, **self.doc(rounds=3))
        main(["al", "--config", full, "--out", str(tmp_path / "full")])
        short = tmp_path / "short.yaml"
        short.write_text(yaml.safe_dump(self.doc(rounds=1)))
        main(["al", "--config", str(short), "--out", str(tmp_path / "res")])
        main(["al", "--config", full, "--out", str(tmp_path / "res"), "--resume"])
        a = [(r["strategy"], r["trial"], r["round"], r["hv"]) for r in read_csv(tmp_path / "full" / "curves.csv")]
        b = [(r["strategy"], r["trial"], r["round"], r["hv"]) for r in read_csv(tmp_path / "res" / "curves.csv")]
        assert a == b

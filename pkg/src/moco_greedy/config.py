"""Run configuration: a YAML file with nested sections, fully resolved before use.

Environment variables ``MOCO_OUT`` and ``MOCO_THREADS`` override the output
directory and thread count; command-line flags override both.
"""

import os
from dataclasses import asdict, dataclass, field, fields

import yaml

from moco_greedy.acquisition import MODES, EnsembleConfig
from moco_greedy.selection import TrainConfig
from moco_greedy.strategies import STRATEGIES
from moco_greedy.tasks import ContractError, make_bigram_task, paper_bigram_task, tiny_bigram_task

SCHEMA_VERSION = 1
RUN_MODES = ("subset", "al", "verify", "oracle")


class ConfigError(ValueError):
    """A configuration problem, naming the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class TaskSpec:
    preset: str = "tiny"
    vocab: str = None
    min_len: int = None
    max_len: int = None
    targets: list = None

    def build(self):
        if self.vocab is not None:
            return make_bigram_task(self.vocab, self.min_len, self.max_len, self.targets)
        if self.preset == "tiny":
            return tiny_bigram_task()
        if self.preset in ("bigrams-2", "bigrams-3", "bigrams-4"):
            return paper_bigram_task(int(self.preset[-1]))
        raise ConfigError("task.preset", f"unknown preset {self.preset!r}")


@dataclass
class AcquisitionSpec:
    beta: float = 0.1
    lam: float = 0.0
    mode: str = "plain"
    ref: list = None


@dataclass
class SurrogateSpec:
    kind: str = "ensemble"
    n_members: int = 5
    hidden: int = 64
    epochs: int = 300
    lr: float = 1e-2

    def ensemble(self, seed=0):
        return EnsembleConfig(self.n_members, self.hidden, self.epochs, self.lr, seed)


@dataclass
class ALSpec:
    rounds: int = 5
    batch: int = 4
    n_init: int = 16
    targets: list = None


@dataclass
class VerifySpec:
    instances: int = 100
    theorems: list = field(default_factory=lambda: ["thm2", "thm3"])
    max_ground: int = 36
    max_n: int = 3
    lam_max: float = 0.2
    alpha_override: float = None
    gamma_scale: float = 1.0


@dataclass
class OracleSpec:
    front: list = None
    ref: list = None
    samples: int = 1_000_000
    n: int = 4


@dataclass
class RunConfig:
    mode: str = "subset"
    seed: int = 0
    trials: int = 10
    out: str = "runs/out"
    threads: int = 1
    strategies: list = field(default_factory=lambda: ["ours", "exact-greedy", "greedy-rs"])
    cardinalities: list = field(default_factory=lambda: [4])
    hidden: int = 64
    task: TaskSpec = field(default_factory=TaskSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    al: ALSpec = field(default_factory=ALSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)

    def to_dict(self):
        d = asdict(self)
        d["train"]["eval_sizes"] = list(self.train.eval_sizes)
        return d


_SECTIONS = {"task": TaskSpec, "train": TrainConfig, "surrogate": SurrogateSpec,
             "acquisition": AcquisitionSpec, "al": ALSpec, "verify": VerifySpec,
             "oracle": OracleSpec}


def _build(cls, raw, prefix):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(prefix, "expected a mapping")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    try:
        return cls(**raw)
    except ContractError as err:
        raise ConfigError(prefix, str(err)) from None
    except TypeError as err:
        raise ConfigError(prefix, str(err)) from None


def from_dict(raw):
    """Resolve a raw mapping into a validated ``RunConfig``."""
    raw = dict(raw or {})
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.mode not in RUN_MODES:
        raise ConfigError("mode", f"must be one of {', '.join(RUN_MODES)}")
    for key in ("seed", "trials", "threads", "hidden"):
        v = getattr(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
            raise ConfigError(key, "must be a positive integer" if key != "seed" else
                              "must be a non-negative integer")
    if not cfg.strategies:
        raise ConfigError("strategies", "must not be empty")
    for s in cfg.strategies:
        if s not in STRATEGIES:
            raise ConfigError("strategies", f"unknown strategy {s!r}")
    if not cfg.cardinalities or any(not isinstance(n, int) or n < 1 for n in cfg.cardinalities):
        raise ConfigError("cardinalities", "must be positive integers")
    if cfg.acquisition.mode not in MODES:
        raise ConfigError("acquisition.mode", f"must be one of {', '.join(MODES)}")
    if cfg.acquisition.beta < 0 or cfg.acquisition.lam < 0:
        raise ConfigError("acquisition", "beta and lam must be non-negative")
    if cfg.surrogate.kind not in ("ensemble", "deterministic"):
        raise ConfigError("surrogate.kind", "must be ensemble or deterministic")
    if cfg.surrogate.n_members < 2:
        raise ConfigError("surrogate.n_members", "an ensemble needs at least 2 members")
    if cfg.al.rounds < 1 or cfg.al.batch < 1:
        raise ConfigError("al", "rounds and batch must be at least 1")
    for t in cfg.verify.theorems:
        if t not in ("thm2", "thm3"):
            raise ConfigError("verify.theorems", f"unknown check {t!r}")
    if cfg.verify.instances < 1:
        raise ConfigError("verify.instances", "must be at least 1")
    try:
        task = cfg.task.build()
    except ContractError as err:
        raise ConfigError("task", str(err)) from None
    ref = cfg.acquisition.ref
    if ref is not None and len(ref) != task.n_objectives:
        raise ConfigError("acquisition.ref", "length must match the number of objectives")


def load_config(path=None, overrides=None, environ=None):
    """Read a YAML file (optional), apply environment and explicit overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path) as f:
                raw = yaml.safe_load(f) or {}
        except OSError as err:
            raise ConfigError("--config", str(err)) from None
        except yaml.YAMLError as err:
            raise ConfigError("--config", f"invalid YAML: {err}") from None
        if not isinstance(raw, dict):
            raise ConfigError("--config", "top level must be a mapping")
    env = os.environ if environ is None else environ
    if env.get("MOCO_OUT"):
        raw["out"] = env["MOCO_OUT"]
    if env.get("MOCO_THREADS"):
        try:
            raw["threads"] = int(env["MOCO_THREADS"])
        except ValueError:
            raise ConfigError("MOCO_THREADS", "must be an integer") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return from_dict(raw)


def dump_config(cfg, path):
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True)

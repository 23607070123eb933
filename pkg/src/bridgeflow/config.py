"""Experiment configuration: TOML tables, dotted overrides and validation.

Every section is a dataclass. Loading resolves defaults (system-dependent
ones included), applies ``--set section.key=value`` overrides and then
checks each section against its module's preconditions, so a bad value is
reported before any work starts, always naming the offending key.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from bridgeflow import dynamics
from bridgeflow.model import ACTIVATIONS
from bridgeflow.paths import ScheduleError, schedule_from_config
from bridgeflow.sampler import SamplerConfig
from bridgeflow.trainer import TrainConfig

OUT_ENV = "BRIDGEFLOW_OUT"

PATH_KEYS = {
    "bridge": ("sigma_min", "sigma", "deterministic"),
    "ot": ("eps_min",),
    "stochastic_interpolant": ("eps", "b_exponent"),
    "ve": ("sigma_min", "sigma_max"),
    "vp": ("beta_min", "beta_max"),
}


PATH_DEFAULTS = {
    "bridge": {"sigma_min": 0.001, "sigma": 0.01},
    "ot": {"eps_min": 0.001},
    "stochastic_interpolant": {"eps": 1.0},
    "ve": {"sigma_min": 0.01, "sigma_max": 1.0},
    "vp": {"beta_min": 0.1, "beta_max": 20.0},
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class SystemSection:
    kind: str = "damped_oscillator"
    n_train: int | None = None  # None: corpus default
    n_test: int = 64
    m: int | None = None
    dt: float | None = None
    params: dict = field(default_factory=dict)  # SystemSpec overrides


@dataclass
class DataSection:
    k: int = 16  # prefix length
    l: int = 8  # forecast horizon


@dataclass
class CodecSection:
    p: int | None = None


@dataclass
class ModelSection:
    width: int = 128
    depth: int = 3
    activation: str = "softplus"
    embed_dim: int = 16


@dataclass
class MetricsSection:
    data_range: float = 2.0


@dataclass
class SweepSection:
    sigma: list = field(default_factory=lambda: [0.0, 0.01, 0.1])
    scheme: list = field(default_factory=lambda: ["euler", "rk4"])
    steps: list = field(default_factory=lambda: [5, 10, 20])


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = ""
    system: SystemSection = field(default_factory=SystemSection)
    data: DataSection = field(default_factory=DataSection)
    codec: CodecSection = field(default_factory=CodecSection)
    path: dict = field(default_factory=lambda: {"kind": "bridge", "sigma_min": 0.001, "sigma": 0.01})
    model: ModelSection = field(default_factory=ModelSection)
    train: dict = field(default_factory=dict)  # TrainConfig fields
    sampler: dict = field(default_factory=dict)  # SamplerConfig fields
    metrics: MetricsSection = field(default_factory=MetricsSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, output directory excluded."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def section_digest(self, *names: str) -> str:
        d = self.to_dict()
        sub = {n: d[n] for n in sorted(names)}
        return hashlib.sha256(json.dumps(sub, sort_keys=True).encode()).hexdigest()

    # typed views ---------------------------------------------------------------

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(**self.sampler)

    def schedule(self):
        return schedule_from_config(self.path)

    def corpus(self) -> dynamics.Corpus:
        base = dynamics.default_corpus(self.system.kind)
        spec = dataclasses.replace(base.spec, **self.system.params)
        return dynamics.Corpus(spec, self.system.n_train, self.system.m, self.system.dt, self.codec.p)


SECTIONS = {
    "system": SystemSection,
    "data": DataSection,
    "codec": CodecSection,
    "model": ModelSection,
    "metrics": MetricsSection,
    "sweep": SweepSection,
}
FREEFORM = {"path", "train", "sampler"}
TOP_LEVEL = {"seed", "out"}


def parse_value(text: str):
    """A TOML scalar/array if ``text`` parses as one, else the bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like section.key=value")
    key, text = assignment.split("=", 1)
    key = key.strip()
    parts = key.split(".")
    if not all(parts):
        raise ConfigError(key, "empty key segment")
    node = raw
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(key, f"{part!r} is not a table")
        node = child
    node[parts[-1]] = parse_value(text.strip())


def _coerce(key: str, value, default):
    """Match ``value`` to the type of the field default; None defaults accept anything."""
    if default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    for kind, label in ((str, "a string"), (list, "an array"), (dict, "a table")):
        if isinstance(default, kind) and not isinstance(value, kind):
            raise ConfigError(key, f"expected {label}, got {value!r}")
    return value


def _build_section(name: str, cls, table) -> object:
    if not isinstance(table, dict):
        raise ConfigError(name, "expected a table")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", f"unknown key; expected one of {sorted(known)}")
        kwargs[key] = _coerce(f"{name}.{key}", value, getattr(defaults, key))
    return cls(**kwargs)


def _typed_table(name: str, cls, table: dict) -> dict:
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", f"unknown key; expected one of {sorted(known)}")
        out[key] = _coerce(f"{name}.{key}", value, getattr(defaults, key))
    return out


def _error_key(section: str, message: str) -> str:
    """Pick ``section.field`` out of a module error message when it names one."""
    for token in message.replace(",", " ").replace(":", " ").split():
        token = token.strip("'\"")
        if token.startswith(section + "."):
            return token
    return section


def build(raw: dict, *, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    for key in raw:
        if key not in SECTIONS and key not in FREEFORM and key not in TOP_LEVEL:
            raise ConfigError(key, "unknown section")
    cfg = ExperimentConfig()
    if "seed" in raw:
        cfg.seed = _coerce("seed", raw["seed"], 0)
    if seed is not None:
        cfg.seed = int(seed)
    if cfg.seed < 0:
        raise ConfigError("seed", "must be >= 0")
    cfg.out = out or raw.get("out") or os.environ.get(OUT_ENV) or "runs"
    if not isinstance(cfg.out, str):
        raise ConfigError("out", "expected a string path")
    for name, cls in SECTIONS.items():
        if name in raw:
            setattr(cfg, name, _build_section(name, cls, raw[name]))
    if "path" in raw:
        if not isinstance(raw["path"], dict):
            raise ConfigError("path", "expected a table")
        given = dict(raw["path"])
        kind = given.get("kind", cfg.path["kind"])
        cfg.path = {"kind": kind, **PATH_DEFAULTS.get(kind, {}), **given}
    cfg.train = _typed_table("train", TrainConfig, raw.get("train", {}))
    cfg.sampler = _typed_table("sampler", SamplerConfig, raw.get("sampler", {}))
    cfg.train.setdefault("seed", cfg.seed)
    cfg.sampler.setdefault("seed", cfg.seed)
    _resolve(cfg)
    validate(cfg)
    cfg.train = _plain(TrainConfig(**cfg.train))
    cfg.sampler = _plain(SamplerConfig(**cfg.sampler))
    return cfg


def _plain(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = value.tolist() if hasattr(value, "tolist") else value
    return out


def _resolve(cfg: ExperimentConfig) -> None:
    """Fill system-dependent defaults so the resolved config is explicit."""
    sysc = cfg.system
    try:
        base = dynamics.default_corpus(sysc.kind)
    except ValueError as exc:
        raise ConfigError("system.kind", str(exc)) from None
    if sysc.n_train is None:
        sysc.n_train = base.n_traj
    if sysc.m is None:
        sysc.m = base.m
    if sysc.dt is None:
        sysc.dt = base.dt
    if cfg.codec.p is None:
        cfg.codec.p = base.latent_dim


def validate(cfg: ExperimentConfig) -> None:
    sysc = cfg.system
    if sysc.n_train < 1:
        raise ConfigError("system.n_train", "must be >= 1")
    if sysc.n_test < 1:
        raise ConfigError("system.n_test", "must be >= 1")
    if sysc.m < 3:
        raise ConfigError("system.m", "trajectories need at least 3 states")
    if not sysc.dt > 0:
        raise ConfigError("system.dt", "must be positive")
    spec_fields = {f.name for f in dataclasses.fields(dynamics.SystemSpec)} - {"kind", "x0"}
    for key in sysc.params:
        if key not in spec_fields:
            raise ConfigError(f"system.params.{key}", f"unknown parameter; expected one of {sorted(spec_fields)}")
    try:
        spec = cfg.corpus().spec
        dynamics.check_stability(spec, sysc.dt)
    except (TypeError, ValueError) as exc:
        raise ConfigError("system.params", str(exc)) from None
    if cfg.data.k < 2:
        raise ConfigError("data.k", "prefix must hold at least 2 states")
    if cfg.data.l < 1:
        raise ConfigError("data.l", "horizon must be >= 1")
    if cfg.data.k + cfg.data.l > sysc.m:
        raise ConfigError("data.k", f"k + l = {cfg.data.k + cfg.data.l} exceeds system.m = {sysc.m}")
    if not 1 <= cfg.codec.p <= spec.dim:
        raise ConfigError("codec.p", f"must lie in [1, {spec.dim}]")
    kind = cfg.path.get("kind")
    if kind not in PATH_KEYS:
        raise ConfigError("path.kind", f"expected one of {tuple(PATH_KEYS)}, got {kind!r}")
    for key in cfg.path:
        if key != "kind" and key not in PATH_KEYS[kind]:
            raise ConfigError(f"path.{key}", f"not a parameter of the {kind} path; expected {PATH_KEYS[kind]}")
    try:
        cfg.schedule()
    except ScheduleError as exc:
        raise ConfigError("path", str(exc)) from None
    m = cfg.model
    if m.width < 1:
        raise ConfigError("model.width", "must be >= 1")
    if m.depth < 0:
        raise ConfigError("model.depth", "must be >= 0")
    if m.activation not in ACTIVATIONS:
        raise ConfigError("model.activation", f"expected one of {tuple(ACTIVATIONS)}")
    if m.embed_dim < 2 or m.embed_dim % 2:
        raise ConfigError("model.embed_dim", "must be even and >= 2")
    for section, cls, table in (("train", TrainConfig, cfg.train), ("sampler", SamplerConfig, cfg.sampler)):
        try:
            cls(**table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(_error_key(section, str(exc)), str(exc)) from None
    if not cfg.metrics.data_range > 0:
        raise ConfigError("metrics.data_range", "must be positive")
    sw = cfg.sweep
    if not sw.sigma or any(not isinstance(s, (int, float)) or s < 0 for s in sw.sigma):
        raise ConfigError("sweep.sigma", "must be a nonempty array of numbers >= 0")
    if not sw.scheme or any(s not in ("euler", "rk4") for s in sw.scheme):
        raise ConfigError("sweep.scheme", "entries must be euler or rk4")
    if not sw.steps or any(not isinstance(n, int) or n < 1 for n in sw.steps):
        raise ConfigError("sweep.steps", "entries must be integers >= 1")


def load(path=None, overrides=(), *, seed=None, out=None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("--config", f"no such file: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("--config", f"TOML parse error: {exc}") from None
    for assignment in overrides:
        apply_override(raw, assignment)
    return build(raw, seed=seed, out=out)


def from_dict(d: dict) -> ExperimentConfig:
    """Rebuild a config from its resolved ``to_dict`` form (a manifest)."""
    d = copy.deepcopy(d)
    out = d.pop("out", None)
    return build(d, out=out)

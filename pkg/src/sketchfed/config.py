"""Experiment configuration: TOML in, fully-resolved TOML/dict out.

Parsing is strict: unknown sections or keys are rejected, and every validation
error names the offending dotted field (``sketch.b``, ``clip.alpha``, ...).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ConfigError
from .sketch import SketchKind, next_pow2

ALGORITHMS = ("safl", "sacfl", "fedavg_baseline", "uncompressed_amsgrad_baseline")


@dataclass
class ProblemConfig:
    kind: str = "quadratic"  # quadratic | logistic | mlp
    d: int = 1024
    spectrum: str = "power_law"  # power_law | explicit
    exponent: float = 2.0
    scale: float = 1.0
    eigenvalues: list = field(default_factory=list)
    rotate: bool = True
    x0_scale: float = 1.0
    n_samples: int = 256
    separation: float = 2.0
    data_weight: float = 1.0
    layers: list = field(default_factory=lambda: [8, 16, 1])
    heterogeneity: float = 0.0
    seed: int = 0


@dataclass
class NoiseConfig:
    kind: str = "none"
    sigma: float = 0.0
    tail_index: float = 1.5
    scale: float = 1.0
    alpha: float = 1.5


@dataclass
class FederationConfig:
    clients: int = 8
    local_steps: int = 5
    rounds: int = 100


@dataclass
class SketchConfig:
    kind: str = "srht"
    b: int = 64


@dataclass
class OptimizerConfig:
    name: str = "amsgrad"  # amsgrad | adam
    beta1: float = 0.9
    beta2: float = 0.99
    kappa: float = 0.01
    eps: float = 1e-8
    bias_correction: bool = False


@dataclass
class LrConfig:
    schedule: str = "decaying"  # decaying | constant
    eta: float = 0.01


@dataclass
class ClipSection:
    schedule: str = "theory"  # theory | fixed
    alpha: float = 2.0
    tau: float = 1.0
    enabled: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    csv: str = "metrics.csv"
    json: str = "result.json"


@dataclass
class ExperimentConfig:
    algorithm: str = "safl"
    seed: int = 0
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    sketch: SketchConfig = field(default_factory=SketchConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr: LrConfig = field(default_factory=LrConfig)
    clip: ClipSection = field(default_factory=ClipSection)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"sketch.b": 32})``."""
        d = self.to_dict()
        for path, value in changes.items():
            node = d
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(path, "unknown field")
            node[leaf] = value
        return from_dict(d)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_SECTION_TYPES = {
    "problem": ProblemConfig, "noise": NoiseConfig, "federation": FederationConfig,
    "sketch": SketchConfig, "optimizer": OptimizerConfig, "lr": LrConfig,
    "clip": ClipSection, "output": OutputConfig,
}


def _coerce(path, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected a table")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
    kwargs = {}
    for name in known:
        if name in data:
            kwargs[name] = _coerce(f"{prefix}.{name}", data[name], getattr(defaults, name))
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown field")
    kwargs = {}
    for key in ("algorithm", "seed"):
        if key in data:
            kwargs[key] = _coerce(key, data[key], getattr(ExperimentConfig, key))
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    return loads(text)


def problem_dim(p: ProblemConfig) -> int:
    if p.kind == "quadratic":
        return len(p.eigenvalues) if p.spectrum == "explicit" else p.d
    if p.kind == "logistic":
        return p.d
    n_in, h, n_out = p.layers
    return h * n_in + h + n_out * h + n_out


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def validate(cfg: ExperimentConfig) -> None:
    _require(cfg.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}, got {cfg.algorithm!r}")
    _require(cfg.seed >= 0, "seed", "must be >= 0")

    p = cfg.problem
    _require(p.kind in ("quadratic", "logistic", "mlp"), "problem.kind", f"unknown problem {p.kind!r}")
    _require(p.spectrum in ("power_law", "explicit"), "problem.spectrum", f"unknown spectrum {p.spectrum!r}")
    if p.kind == "quadratic" and p.spectrum == "explicit":
        _require(len(p.eigenvalues) > 0, "problem.eigenvalues", "empty spectrum")
    else:
        _require(p.d >= 1, "problem.d", "must be >= 1")
    if p.kind == "mlp":
        _require(len(p.layers) == 3 and all(isinstance(n, int) and n >= 1 for n in p.layers),
                 "problem.layers", "must be three positive integers [n_in, hidden, n_out]")
    _require(p.data_weight > 0, "problem.data_weight", "must be > 0")
    _require(p.n_samples >= 1, "problem.n_samples", "must be >= 1")
    _require(0.0 <= p.heterogeneity <= 1.0, "problem.heterogeneity", "must lie in [0, 1]")
    _require(p.seed >= 0, "problem.seed", "must be >= 0")

    from .problems import NoiseModel  # validates its own fields
    NoiseModel(**dataclasses.asdict(cfg.noise))

    f = cfg.federation
    _require(f.clients >= 1, "federation.clients", "must be >= 1")
    _require(f.local_steps >= 1, "federation.local_steps", "must be >= 1")
    _require(f.rounds >= 0, "federation.rounds", "must be >= 0")

    s = cfg.sketch
    kinds = [k.value for k in SketchKind]
    _require(s.kind in kinds, "sketch.kind", f"must be one of {kinds}, got {s.kind!r}")
    d = problem_dim(p)
    if cfg.algorithm in ("safl", "sacfl"):
        _require(s.b >= 1, "sketch.b", f"must be >= 1, got {s.b}")
        _require(s.b <= next_pow2(d), "sketch.b", f"must not exceed padded dimension {next_pow2(d)}, got {s.b}")
        if s.kind == "identity":
            _require(s.b == d, "sketch.b", f"identity sketch requires b == d ({d}), got {s.b}")

    o = cfg.optimizer
    _require(o.name in ("amsgrad", "adam"), "optimizer.name", f"unknown optimizer {o.name!r}")
    _require(0.0 <= o.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)")
    _require(0.0 <= o.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)")
    _require(o.kappa > 0, "optimizer.kappa", "must be > 0")
    _require(o.eps > 0, "optimizer.eps", "must be > 0")

    _require(cfg.lr.schedule in ("decaying", "constant"), "lr.schedule", f"unknown schedule {cfg.lr.schedule!r}")
    _require(cfg.lr.eta > 0, "lr.eta", "must be > 0")

    c = cfg.clip
    _require(c.schedule in ("theory", "fixed"), "clip.schedule", f"unknown schedule {c.schedule!r}")
    if cfg.algorithm == "sacfl" and c.schedule == "theory":
        _require(1.0 < c.alpha <= 2.0, "clip.alpha", f"must lie in (1, 2], got {c.alpha}")
    _require(c.tau > 0 and not math.isnan(c.tau), "clip.tau", "must be > 0")

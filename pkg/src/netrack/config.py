"""
Experiment configuration: a YAML/JSON key-value tree parsed into
dataclasses, with unknown keys rejected by path.
"""

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field

import yaml


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


TOPOLOGY_KINDS = ("complete", "ring", "star", "path", "erdos_renyi", "explicit", "matrix")
WEIGHT_SCHEMES = ("metropolis", "lazy_max_degree")
SENSING_KINDS = ("identity", "explicit", "coordinate", "gaussian", "anchored")
INIT_KINDS = ("zero", "exact", "explicit", "gaussian")
TRACE_MODES = ("all", "none")

TRAJECTORY_KEYS = {
    "static": {"theta"},
    "linear_drift": {"start", "velocity"},
    "sinusoid": {"center", "amplitude", "period"},
    "random_walk": {"start", "step_std"},
    "decaying_walk": {"start", "step_std", "decay"},
    "piecewise_constant": {"values", "switch"},
    "file": {"path"},
}
TRAJECTORY_REQUIRED = {
    "linear_drift": {"velocity"},
    "sinusoid": {"period"},
    "piecewise_constant": {"values"},
    "file": {"path"},
}
INIT_KEYS = {"zero": set(), "exact": set(), "explicit": {"values"}, "gaussian": {"mean", "std"}}


@dataclass
class TopologyConfig:
    kind: str = "ring"
    weights: str = "metropolis"
    p: typing.Optional[float] = None
    edges: typing.Optional[list] = None
    matrix: typing.Optional[list] = None


@dataclass
class NoiseConfig:
    family: str = "gaussian"
    sigma: typing.Any = 1.0  # scalar or one value per agent


@dataclass
class SensingConfig:
    kind: str = "identity"
    H: typing.Optional[list] = None  # explicit: one row list per agent
    m: int = 1
    gain: float = 1.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    noise_scale: float = 1.0


@dataclass
class FlagsConfig:
    retain_noise: bool = False
    allow_unstable: bool = False
    allow_unidentifiable: bool = False
    exclude_diverged: bool = False
    traces: str = "all"


@dataclass
class ExperimentConfig:
    seed: int
    n: int
    d: int
    T: int
    replicas: int = 100
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    trajectory: dict = field(default_factory=lambda: {"kind": "static", "theta": 0.0})
    alpha: typing.Any = "static"  # number or tuning-policy name
    init: dict = field(default_factory=lambda: {"kind": "zero"})
    flags: FlagsConfig = field(default_factory=FlagsConfig)
    output: typing.Optional[str] = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        return config_hash(self)


# output location never changes results, so it stays out of the hash
HASH_EXCLUDE = ("output",)


def config_hash(cfg):
    data = {k: v for k, v in cfg.to_dict().items() if k not in HASH_EXCLUDE}
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    flds = {f.name: f for f in dataclasses.fields(cls)}
    hints = typing.get_type_hints(cls)
    unknown = sorted(set(data) - set(flds))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            value = _build(hint, value, f"{path}.{name}")
        kwargs[name] = value
    missing = [f.name for f in flds.values()
               if f.name not in kwargs and f.default is dataclasses.MISSING
               and f.default_factory is dataclasses.MISSING]
    if missing:
        raise ConfigError(f"{path}.{missing[0]}", "required key missing")
    return cls(**kwargs)


def _int(value, path, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    return value


def _num(value, path, lo=None, strict=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if lo is not None and (value < lo or (strict and value == lo)):
        raise ConfigError(path, f"must be {'>' if strict else '>='} {lo}, got {value}")
    return float(value)


def _choice(value, options, path):
    if value not in options:
        raise ConfigError(path, f"must be one of {', '.join(options)}, got {value!r}")
    return value


def validate(cfg):
    """Check value ranges and cross-field consistency; returns ``cfg``."""
    if cfg.seed is None:
        raise ConfigError("config.seed", "a seed is mandatory")
    _int(cfg.seed, "config.seed", 0)
    _int(cfg.n, "config.n", 1)
    _int(cfg.d, "config.d", 1)
    _int(cfg.T, "config.T", 1)
    _int(cfg.replicas, "config.replicas", 1)

    top = cfg.topology
    _choice(top.kind, TOPOLOGY_KINDS, "config.topology.kind")
    _choice(top.weights, WEIGHT_SCHEMES, "config.topology.weights")
    if top.kind == "erdos_renyi":
        if top.p is None:
            raise ConfigError("config.topology.p", "required for erdos_renyi")
        _num(top.p, "config.topology.p", 0.0, strict=True)
    if top.kind == "explicit" and top.edges is None:
        raise ConfigError("config.topology.edges", "required for explicit topology")
    if top.kind == "matrix":
        if top.matrix is None:
            raise ConfigError("config.topology.matrix", "required for matrix topology")
        if len(top.matrix) != cfg.n or any(len(r) != cfg.n for r in top.matrix):
            raise ConfigError("config.topology.matrix", f"must be {cfg.n} x {cfg.n}")

    sen = cfg.sensing
    _choice(sen.kind, SENSING_KINDS, "config.sensing.kind")
    _int(sen.m, "config.sensing.m", 1)
    _num(sen.gain, "config.sensing.gain", 0.0, strict=True)
    _num(sen.noise_scale, "config.sensing.noise_scale", 0.0)
    _choice(sen.noise.family, ("gaussian", "uniform"), "config.sensing.noise.family")
    sig = sen.noise.sigma
    if isinstance(sig, list):
        if len(sig) != cfg.n:
            raise ConfigError("config.sensing.noise.sigma", f"needs {cfg.n} per-agent values")
        for k, s in enumerate(sig):
            _num(s, f"config.sensing.noise.sigma[{k}]", 0.0)
    else:
        _num(sig, "config.sensing.noise.sigma", 0.0)
    if sen.kind == "explicit":
        if sen.H is None or len(sen.H) != cfg.n:
            raise ConfigError("config.sensing.H", f"needs one matrix per agent ({cfg.n})")
        for k, H in enumerate(sen.H):
            rows = H if isinstance(H, list) and H and isinstance(H[0], list) else [H]
            if any(len(r) != cfg.d for r in rows):
                raise ConfigError(f"config.sensing.H[{k}]", f"rows must have d={cfg.d} entries")

    traj = cfg.trajectory
    if not isinstance(traj, dict) or "kind" not in traj:
        raise ConfigError("config.trajectory.kind", "required key missing")
    kind = _choice(traj["kind"], tuple(TRAJECTORY_KEYS), "config.trajectory.kind")
    allowed = TRAJECTORY_KEYS[kind] | {"kind", "scale"}
    for key in traj:
        if key not in allowed:
            raise ConfigError(f"config.trajectory.{key}", f"unknown key for {kind}")
    for key in TRAJECTORY_REQUIRED.get(kind, ()):
        if key not in traj:
            raise ConfigError(f"config.trajectory.{key}", f"required for {kind}")

    if isinstance(cfg.alpha, str):
        _choice(cfg.alpha, ("static", "noiseless", "general"), "config.alpha")
    else:
        _num(cfg.alpha, "config.alpha", 0.0)

    init = cfg.init
    if not isinstance(init, dict) or "kind" not in init:
        raise ConfigError("config.init.kind", "required key missing")
    ikind = _choice(init["kind"], INIT_KINDS, "config.init.kind")
    for key in init:
        if key not in INIT_KEYS[ikind] | {"kind"}:
            raise ConfigError(f"config.init.{key}", f"unknown key for {ikind}")
    if ikind == "explicit" and "values" not in init:
        raise ConfigError("config.init.values", "required for explicit init")

    _choice(cfg.flags.traces, TRACE_MODES, "config.flags.traces")
    return cfg


def from_dict(data):
    if isinstance(data, dict) and "seed" not in data:
        raise ConfigError("config.seed", "a seed is mandatory")
    return validate(_build(ExperimentConfig, data, "config"))


def parse_config(text):
    """Parse a YAML (or JSON) document into a validated config."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"malformed document ({exc})") from None
    return from_dict(data)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def override(cfg, **changes):
    """Copy with top-level fields replaced, re-validated."""
    return validate(dataclasses.replace(cfg, **changes))

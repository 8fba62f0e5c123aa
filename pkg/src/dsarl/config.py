"""Experiment configuration: JSON files mapped onto nested dataclasses.

Unknown keys are rejected and every error names the offending field path,
e.g. ``scenario.sensing_error[1][0]``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from dsarl.agents import EpsilonSchedule

AGENT_KINDS = ("dqn_rc", "dqn_mlp", "qlearning", "myopic", "always_access", "sensed_inactive")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


@dataclass
class ReservoirSpec:
    n_reservoir: int = 64
    spectral_radius: float = 0.9
    input_scale: float = 1.0
    connectivity: float = 0.2
    leak_rate: float = 1.0


@dataclass
class AgentSpec:
    kind: str = "dqn_rc"
    gamma: float = 0.9
    learning_rate: float = 0.01
    epochs: int = 1
    batch_size: int = 1
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    reservoir: ReservoirSpec = field(default_factory=ReservoirSpec)
    readout_fit: str = "sgd"
    ridge: float = 1e-2
    hidden_layers: list[int] = field(default_factory=lambda: [64])
    shuffle: bool = True
    allow_idle: bool = True
    channel: int = 1


@dataclass
class ScenarioSpec:
    n_channels: int = 6
    n_sus: int = 2
    arena_m: float = 150.0
    link_distance_m: list[float] = field(default_factory=lambda: [20.0, 40.0])
    p11_range: list[float] = field(default_factory=lambda: [0.7, 1.0])
    p00_range: list[float] = field(default_factory=lambda: [0.0, 0.3])
    sensing_error: Union[float, list[list[float]]] = 0.1
    schedule: Optional[list[list[int]]] = None
    reward_timing: str = "next"
    fading: str = "iid"


@dataclass
class RadioSpec:
    carrier_freq_ghz: float = 5.0
    pl_ref_db: float = 41.0
    pl_exponent: float = 22.7
    pl_freq_dep: float = 20.0
    k_factor: float = 8.0
    bandwidth_hz: float = 1e6
    noise_density_mw_per_hz: float = 10 ** -14.7
    sinr_gap: float = 1.0
    su_power_mw: float = 20.0
    pu_power_mw: float = 40.0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    iterations: int = 100
    slots_per_iteration: int = 2000
    penalty: float = 2.0
    evaluation_slots: int = 0
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    radio: RadioSpec = field(default_factory=RadioSpec)
    agents: list[AgentSpec] = field(default_factory=lambda: [AgentSpec()])
    output: Optional[str] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def agent_for(self, su: int) -> AgentSpec:
        return self.agents[0] if len(self.agents) == 1 else self.agents[su]

    def with_agents(self, *specs: AgentSpec) -> "ExperimentConfig":
        return dataclasses.replace(self, agents=list(specs))


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin is Union:
        errors = []
        for arm in typing.get_args(tp):
            if arm is type(None):
                if value is None:
                    return None
                continue
            try:
                return _coerce(arm, value, path)
            except ConfigError as e:
                errors.append(e)
        raise errors[-1] if errors else ConfigError(path, "must not be null")
    if origin is list:
        (inner,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {tp!r} at {path}")


def from_dict(cls, data, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown key")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def _check_range(rng, path):
    if len(rng) != 2 or not 0.0 <= rng[0] <= rng[1] <= 1.0:
        raise ConfigError(path, f"{rng} is not an interval inside [0, 1]")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.iterations < 0:
        raise ConfigError("iterations", "must be >= 0")
    if cfg.slots_per_iteration < 1:
        raise ConfigError("slots_per_iteration", "must be >= 1")
    if cfg.penalty <= 0:
        raise ConfigError("penalty", "must be positive")
    if cfg.evaluation_slots < 0:
        raise ConfigError("evaluation_slots", "must be >= 0")
    s = cfg.scenario
    if s.n_channels < 1:
        raise ConfigError("scenario.n_channels", "must be >= 1")
    if s.n_sus < 1:
        raise ConfigError("scenario.n_sus", "must be >= 1")
    if s.arena_m <= 0:
        raise ConfigError("scenario.arena_m", "must be positive")
    d = s.link_distance_m
    if len(d) != 2 or not 0 < d[0] <= d[1]:
        raise ConfigError("scenario.link_distance_m", f"{d} is not a positive [min, max]")
    if d[0] > s.arena_m * 2 ** 0.5:
        raise ConfigError("scenario.link_distance_m", "minimum exceeds the arena diagonal")
    _check_range(s.p11_range, "scenario.p11_range")
    _check_range(s.p00_range, "scenario.p00_range")
    if isinstance(s.sensing_error, float):
        if not 0.0 <= s.sensing_error <= 0.5:
            raise ConfigError("scenario.sensing_error", f"{s.sensing_error} outside [0, 0.5]")
    else:
        if len(s.sensing_error) != s.n_sus:
            raise ConfigError("scenario.sensing_error", f"needs {s.n_sus} rows (one per SU)")
        for i, row in enumerate(s.sensing_error):
            if len(row) != s.n_channels:
                raise ConfigError(f"scenario.sensing_error[{i}]", f"needs {s.n_channels} entries")
            for j, e in enumerate(row):
                if not 0.0 <= e <= 0.5:
                    raise ConfigError(f"scenario.sensing_error[{i}][{j}]", f"{e} outside [0, 0.5]")
    if s.schedule is not None:
        if len(s.schedule) != s.n_channels:
            raise ConfigError("scenario.schedule", f"needs {s.n_channels} rows (one per channel)")
        period = len(s.schedule[0]) if s.schedule else 0
        for i, row in enumerate(s.schedule):
            if len(row) != period or period < 1:
                raise ConfigError(f"scenario.schedule[{i}]", "rows must share a period >= 1")
            if any(v not in (0, 1) for v in row):
                raise ConfigError(f"scenario.schedule[{i}]", "states must be 0 (Active) or 1 (Inactive)")
    if s.reward_timing not in ("next", "current"):
        raise ConfigError("scenario.reward_timing", "must be 'next' or 'current'")
    if s.fading not in ("iid", "static"):
        raise ConfigError("scenario.fading", "must be 'iid' or 'static'")
    try:
        from dsarl.channel import PropagationParams
        PropagationParams(**{k: v for k, v in dataclasses.asdict(cfg.radio).items()
                             if not k.endswith("_power_mw")})
    except ValueError as e:
        raise ConfigError("radio", str(e)) from None
    if cfg.radio.su_power_mw < 0 or cfg.radio.pu_power_mw < 0:
        raise ConfigError("radio", "powers must be non-negative")
    if len(cfg.agents) not in (1, s.n_sus):
        raise ConfigError("agents", f"give one spec for all SUs or exactly {s.n_sus}")
    for i, a in enumerate(cfg.agents):
        p = f"agents[{i}]"
        if a.kind not in AGENT_KINDS:
            raise ConfigError(f"{p}.kind", f"{a.kind!r} not in {AGENT_KINDS}")
        if not 0.0 <= a.gamma <= 1.0:
            raise ConfigError(f"{p}.gamma", "must lie in [0, 1]")
        if a.kind == "qlearning" and not 0.0 < a.learning_rate < 1.0:
            raise ConfigError(f"{p}.learning_rate", "Q-learning step size must lie in (0, 1)")
        if a.learning_rate < 0:
            raise ConfigError(f"{p}.learning_rate", "must be non-negative")
        if a.epochs < 1:
            raise ConfigError(f"{p}.epochs", "must be >= 1")
        if a.batch_size < 1:
            raise ConfigError(f"{p}.batch_size", "must be >= 1")
        if a.readout_fit not in ("sgd", "ridge"):
            raise ConfigError(f"{p}.readout_fit", "must be 'sgd' or 'ridge'")
        if not a.hidden_layers or any(h < 1 for h in a.hidden_layers):
            raise ConfigError(f"{p}.hidden_layers", "need at least one positive layer size")
        if not 1 <= a.channel <= s.n_channels:
            raise ConfigError(f"{p}.channel", f"must lie in 1..{s.n_channels}")
        r = a.reservoir
        if r.n_reservoir < 1:
            raise ConfigError(f"{p}.reservoir.n_reservoir", "must be >= 1")
        if not 0.0 < r.spectral_radius < 1.0:
            raise ConfigError(f"{p}.reservoir.spectral_radius", "must lie in (0, 1)")
        if not 0.0 < r.connectivity <= 1.0:
            raise ConfigError(f"{p}.reservoir.connectivity", "must lie in (0, 1]")
        if not 0.0 < r.leak_rate <= 1.0:
            raise ConfigError(f"{p}.reservoir.leak_rate", "must lie in (0, 1]")
        if r.input_scale <= 0:
            raise ConfigError(f"{p}.reservoir.input_scale", "must be positive")
    return cfg


def parse_config(data: dict) -> ExperimentConfig:
    return validate(from_dict(ExperimentConfig, data))


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a bundled config by name (e.g. ``exp2_6ch_2su``)."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        bundled = resources.files("dsarl") / "configs" / f"{path}.json"
        if bundled.is_file():
            return parse_config(json.loads(bundled.read_text()))
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"{path} is not valid JSON: {e}") from None
    return parse_config(data)


def bundled_configs() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("dsarl") / "configs").iterdir()
                  if p.name.endswith(".json"))


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything except the seed and output location."""
    d = cfg.to_dict()
    d.pop("seed")
    d.pop("output")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

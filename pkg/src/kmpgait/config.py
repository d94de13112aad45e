"""Pipeline configuration: one JSON document, validated section by section."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .env import EnvConfig, SymmetryMode, JOINT_NAMES
from .kinematics import LegGeometry
from .kmp import MAX_LENGTH_DEVIATION, MIN_PERIOD, N_SAMPLES, PROMINENCE, REFERENCE_CHANNEL, TRIM_FRACTION
from .ppo import PpoConfig
from .synthesis import GaitSpec, builtin_gait_specs

CONFIG_ENV_VAR = "KMPGAIT_CONFIG"
SECTIONS = ("environment", "ppo", "extraction", "synthesis", "stream")


class ConfigError(ValueError):
    pass


@dataclass
class ExtractionConfig:
    trim_fraction: float = TRIM_FRACTION
    n_samples: int = N_SAMPLES
    reference_channel: str = REFERENCE_CHANNEL
    min_period: float = MIN_PERIOD
    prominence: float = PROMINENCE
    max_deviation: float = MAX_LENGTH_DEVIATION
    n_components: int = 4

    def __post_init__(self):
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5)")
        if self.n_samples < 4:
            raise ValueError("n_samples must be at least 4")
        if self.reference_channel not in JOINT_NAMES:
            raise ValueError(f"reference_channel must be one of {list(JOINT_NAMES)}")
        if self.min_period <= 0 or self.prominence < 0:
            raise ValueError("min_period must be positive and prominence non-negative")
        if not 0.0 < self.max_deviation:
            raise ValueError("max_deviation must be positive")
        if not 1 <= self.n_components <= len(JOINT_NAMES):
            raise ValueError(f"n_components must lie in [1, {len(JOINT_NAMES)}]")


@dataclass
class SynthesisConfig:
    gaits: dict = field(default_factory=builtin_gait_specs)
    source_gait: str = "trot"
    max_clamp_fraction: float = 0.05

    def __post_init__(self):
        specs = builtin_gait_specs()
        for name, spec in dict(self.gaits).items():
            specs[name] = spec if isinstance(spec, GaitSpec) else gait_spec_from_dict(name, spec)
        self.gaits = specs
        if self.source_gait not in self.gaits:
            raise ValueError(f"source_gait {self.source_gait!r} is not a known gait")
        if not 0.0 <= self.max_clamp_fraction <= 1.0:
            raise ValueError("max_clamp_fraction must lie in [0, 1]")


def gait_spec_from_dict(name, data) -> GaitSpec:
    if not isinstance(data, dict):
        raise ValueError(f"gait {name!r} must be an object")
    unknown = set(data) - {"offsets", "radial_scale", "angular_scale"}
    if unknown:
        raise ValueError(f"gait {name!r}: unknown keys {sorted(unknown)}")
    if "offsets" not in data:
        raise ValueError(f"gait {name!r}: missing 'offsets'")
    try:
        return GaitSpec(**data)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"gait {name!r}: {exc}") from None


@dataclass
class StreamConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    rate_hz: float = 50.0

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ValueError("port must lie in [0, 65535]")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")


@dataclass
class PipelineConfig:
    environment: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)


def _build(cls, data: dict, section: str, converters=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{section}.{key}: unknown key (allowed: {sorted(names)})")
    kwargs = {}
    for key, value in data.items():
        conv = (converters or {}).get(key)
        try:
            kwargs[key] = conv(value) if conv else _coerce(names[key], value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _coerce(f, value):
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
    elif isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, tuple):
        value = tuple(value)
    return value


def _geometry(data):
    return _build(LegGeometry, {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}, "environment.geometry")


def from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key in data:
        if key not in SECTIONS:
            raise ConfigError(f"{key}: unknown section (allowed: {list(SECTIONS)})")
    return PipelineConfig(
        environment=_build(
            EnvConfig,
            data.get("environment", {}),
            "environment",
            {"geometry": _geometry, "symmetry": SymmetryMode},
        ),
        ppo=_build(PpoConfig, data.get("ppo", {}), "ppo"),
        extraction=_build(ExtractionConfig, data.get("extraction", {}), "extraction"),
        synthesis=_build(SynthesisConfig, data.get("synthesis", {}), "synthesis", {"gaits": dict}),
        stream=_build(StreamConfig, data.get("stream", {}), "stream"),
    )


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Read a config file (or ``$KMPGAIT_CONFIG``, or defaults) and apply overrides.

    ``overrides`` maps dotted keys such as ``"ppo.epochs"`` to values.
    """
    path = path or os.environ.get(CONFIG_ENV_VAR)
    data = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not isinstance(data, dict):
            break
        data.setdefault(section, {})[key] = value
    return from_dict(data)


def to_dict(config: PipelineConfig) -> dict:
    env = dataclasses.asdict(config.environment)
    env["symmetry"] = config.environment.symmetry.value
    syn = {
        "gaits": {n: dataclasses.asdict(s) for n, s in config.synthesis.gaits.items()},
        "source_gait": config.synthesis.source_gait,
        "max_clamp_fraction": config.synthesis.max_clamp_fraction,
    }
    return {
        "environment": env,
        "ppo": dataclasses.asdict(config.ppo),
        "extraction": dataclasses.asdict(config.extraction),
        "synthesis": syn,
        "stream": dataclasses.asdict(config.stream),
    }

"""Configuration bundle and JSON (de)serialization.

Every tunable lives in one nested JSON document whose sections mirror the
dataclasses below. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .encoder import EncoderConfig
from .gate import GateConfig
from .plant import PlantConfig
from .readout import LutParams, ReadoutParams
from .reservoir import NeuronParams, ReservoirParams


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    """Everything that determines the trained network (stored in snapshots)."""

    f_in: float = 2000.0
    topology_seed: int = 42
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    reservoir: ReservoirParams = field(default_factory=ReservoirParams)
    neuron: NeuronParams = field(default_factory=NeuronParams)
    readout: ReadoutParams = field(default_factory=ReadoutParams)
    lut: LutParams = field(default_factory=LutParams)

    def __post_init__(self):
        if self.f_in <= 0:
            raise ConfigError("f_in must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class LoopConfig:
    """Session-level knobs: gate, plant, blanking and actuation latency."""

    gate: GateConfig = field(default_factory=GateConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    blank_ms: float = 2.0
    latency_steps: int = 1

    def __post_init__(self):
        if self.blank_ms < 0:
            raise ConfigError("blank_ms must be non-negative")
        if self.latency_steps < 1:
            raise ConfigError("latency_steps must be at least 1 (causal actuation)")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for name, value in data.items():
        f = known[name]
        default = f.default if f.default is not MISSING else f.default_factory()  # type: ignore[misc]
        if is_dataclass(default):
            kw[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def network_from_dict(data: dict) -> NetworkConfig:
    return _build(NetworkConfig, data, "network")


def loop_from_dict(data: dict) -> LoopConfig:
    return _build(LoopConfig, data, "loop")


def load_config(path: str | Path | None) -> tuple[NetworkConfig, LoopConfig]:
    """Read ``{"network": {...}, "loop": {...}}``; missing sections use defaults."""
    if path is None:
        return NetworkConfig(), LoopConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = set(data) - {"network", "loop"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return network_from_dict(data.get("network", {})), loop_from_dict(data.get("loop", {}))


def dump_config(net: NetworkConfig, loop: LoopConfig) -> str:
    return json.dumps({"network": net.to_dict(), "loop": loop.to_dict()}, indent=2, sort_keys=True)


def with_overrides(obj, **kw):
    """``dataclasses.replace`` that reports bad values as :class:`ConfigError`."""
    try:
        return replace(obj, **kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e

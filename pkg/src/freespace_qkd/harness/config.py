"""Experiment configuration: one nested YAML document, every default from the 205 m run.

Example (all keys optional)::

    seed: 205
    pulse_count: 10000000
    output_dir: qkd-out
    rng_algorithm: PCG64
    transport: in_process          # or "socket"
    pulse_sample_every: 0          # log every k-th slot's outcome; 0 = off
    source:   {mean_photons: 0.7, pulse_rate: 20000.0, photon_statistics: poisson}
    channel:  {coupling_efficiency: 0.02, path_length: 205.0}
    receiver: {dim_delay: 5.0e-8, sp_lp_delay: 5.0e-9, window_width: 5.0e-9,
               detector_count: 1, timing: optics}
    detector: {per_photon_efficiency: 0.65, dark_rate: 80.0, background_rate: 1000.0,
               dead_time: 3.5e-8, afterpulse_prob_per_slot: 8.0e-5,
               reflection_late_click_prob: 2.27e-4}
    protocol: {protocol: B92, ber_sample_fraction: 0.1}
    reconcile: {block_rows: 4, block_cols: 4, passes: 3, shuffle_seed: 0}
    eve:      {strategy: none, resend_mode: single_photon, mu_e: 0.7,
               bright_photons: 10000, detector: {...}}
"""

from __future__ import annotations

import dataclasses
import enum
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..adversary import EveConfig
from ..errors import ConfigError
from ..link_sim import ChannelParams, DetectorParams, ReceiverParams, SourceParams
from ..protocol import ProtocolConfig
from ..reconcile import ReconcileConfig

RNG_ALGORITHMS = ("PCG64", "PCG64DXSM", "Philox", "SFC64", "MT19937")
TRANSPORTS = ("in_process", "socket")
ENV_OUTPUT_DIR = "QKD_OUTPUT_DIR"

_SECTIONS = {
    "source": SourceParams,
    "channel": ChannelParams,
    "receiver": ReceiverParams,
    "detector": DetectorParams,
    "protocol": ProtocolConfig,
    "reconcile": ReconcileConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceParams = field(default_factory=SourceParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    receiver: ReceiverParams = field(default_factory=ReceiverParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    reconcile: ReconcileConfig = field(default_factory=lambda: ReconcileConfig(passes=3))
    eve: EveConfig = field(default_factory=EveConfig)
    seed: int = 205
    pulse_count: int = 10_000_000
    output_dir: str = "qkd-out"
    rng_algorithm: str = "PCG64"
    chunk_size: int = 1_000_000
    pulse_sample_every: int = 0
    transport: str = "in_process"

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.pulse_count < 0:
            raise ConfigError("pulse_count", "must be >= 0")
        if self.rng_algorithm not in RNG_ALGORITHMS:
            raise ConfigError("rng_algorithm", f"must be one of {RNG_ALGORITHMS}")
        if self.chunk_size <= 0:
            raise ConfigError("chunk_size", "must be > 0")
        if self.pulse_sample_every < 0:
            raise ConfigError("pulse_sample_every", "must be >= 0")
        if self.transport not in TRANSPORTS:
            raise ConfigError("transport", f"must be one of {TRANSPORTS}")
        slot = 1.0 / self.source.pulse_rate
        busy = self.receiver.late_time + self.receiver.window_width / 2 + self.detector.dead_time
        if slot <= busy:
            raise ConfigError("source.pulse_rate", "slots too short for the coincidence windows plus dead time")
        if self.protocol.protocol == "BB84" and self.eve.active:
            raise ConfigError("eve.strategy", "the intercept-resend model targets B92 only")
        # Bob interprets windows with the same convention his optics use
        if self.protocol.timing is not self.receiver.timing:
            object.__setattr__(self, "protocol", replace(self.protocol, timing=self.receiver.timing))

    @property
    def session_id(self) -> str:
        return f"qkd-{self.seed:016x}"

    def make_rng(self, stream: str) -> np.random.Generator:
        """Independent generator for a named stream, derived from the seed."""
        key = [self.seed & 0xFFFFFFFF, self.seed >> 32, *stream.encode()]
        bitgen = getattr(np.random, self.rng_algorithm)(np.random.SeedSequence(key))
        return np.random.Generator(bitgen)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _plain(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    return value


def to_dict(cfg: ExperimentConfig) -> dict:
    d = _plain(cfg)
    d["eve"]["detector"] = d["eve"].pop("eve_detector")
    d["protocol"].pop("timing")
    return d


def _coerce(name: str, default: Any, value: Any) -> Any:
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and not isinstance(default, enum.Enum):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, (str, enum.Enum)):
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {type(default).__name__}, got {value!r}") from None
    return value


def _build(cls, section: str, data: Any, skip: tuple[str, ...] = ()):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(section, "expected a mapping")
    defaults = cls()
    known = {f.name for f in fields(cls)} - set(skip)
    for key in data:
        if key not in known:
            raise ConfigError(f"{section}.{key}", "unknown field")
    kwargs = {k: _coerce(f"{section}.{k}", getattr(defaults, k), v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    kwargs: dict[str, Any] = {}
    for section, cls in _SECTIONS.items():
        if section in data:
            skip = ("timing",) if section == "protocol" else ()
            kwargs[section] = _build(cls, section, data.pop(section), skip)
    if "eve" in data:
        eve = dict(data.pop("eve") or {})
        det = eve.pop("detector", None)
        e = _build(EveConfig, "eve", eve, skip=("eve_detector",))
        if det is not None:
            base = DetectorParams.ideal()
            if not isinstance(det, dict):
                raise ConfigError("eve.detector", "expected a mapping")
            for k in det:
                if not hasattr(base, k):
                    raise ConfigError(f"eve.detector.{k}", "unknown field")
            e = replace(e, eve_detector=replace(base, **{k: _coerce(f"eve.detector.{k}", getattr(base, k), v) for k, v in det.items()}))
        kwargs["eve"] = e
    defaults = ExperimentConfig()
    top = {f.name for f in fields(ExperimentConfig)} - set(_SECTIONS) - {"eve"}
    for key, value in data.items():
        if key not in top:
            raise ConfigError(key, "unknown field")
        kwargs[key] = _coerce(key, getattr(defaults, key), value)
    return ExperimentConfig(**kwargs)


def load_config(path: str | os.PathLike | None = None, **overrides) -> ExperimentConfig:
    """Read a YAML config (or defaults when ``path`` is None) and apply overrides.

    ``QKD_OUTPUT_DIR`` in the environment replaces ``output_dir``; explicit
    keyword overrides win over both.
    """
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
    if os.environ.get(ENV_OUTPUT_DIR):
        data["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    data.update({k: v for k, v in overrides.items() if v is not None})
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)

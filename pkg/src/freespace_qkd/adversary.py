"""Intercept-resend eavesdropper and the dual-fire monitor that exposes it.

Eve sits between the channel and Bob's telescope. She measures every pulse
with her own copy of Bob's passive receiver and, whenever she gets a
conclusive click, sends Bob a fresh B92 state for the bit she saw. Pulses she
could not identify are replaced by vacuum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, UnsupportedConfiguration
from .link_sim import (
    B92_STATES,
    DetectorParams,
    OutcomeKind,
    PulseRecord,
    ReceiverParams,
    receive_batch,
    receive_pulse,
    window_bits,
)


@dataclass(frozen=True)
class EveConfig:
    strategy: str = "none"
    resend_mode: str = "single_photon"
    mu_e: float = 0.7
    bright_photons: int = 10_000
    eve_detector: DetectorParams = field(default_factory=DetectorParams.ideal)

    def __post_init__(self) -> None:
        if self.strategy not in ("none", "intercept_resend"):
            raise ConfigError("eve.strategy", "must be 'none' or 'intercept_resend'")
        if self.resend_mode not in ("single_photon", "bright"):
            raise ConfigError("eve.resend_mode", "must be 'single_photon' or 'bright'")
        if not self.mu_e >= 0:
            raise ConfigError("eve.mu_e", "must be >= 0")
        if self.bright_photons < 1000:
            raise ConfigError("eve.bright_photons", "a bright pulse needs at least 1000 photons")

    @property
    def active(self) -> bool:
        return self.strategy != "none"


def eve_receiver(rp: ReceiverParams) -> ReceiverParams:
    return replace(rp, detector_count=1)


def _resend_count(cfg: EveConfig, rng: np.random.Generator, size=None):
    if cfg.resend_mode == "bright":
        return cfg.bright_photons if size is None else np.full(size, cfg.bright_photons, dtype=np.int64)
    return rng.poisson(cfg.mu_e, size)


def eve_process(p: PulseRecord, cfg: EveConfig, rp: ReceiverParams, rng: np.random.Generator) -> PulseRecord:
    if not cfg.active:
        return p
    erp = eve_receiver(rp)
    seen = receive_pulse(p, erp, cfg.eve_detector, rng)
    if seen.kind not in (OutcomeKind.EARLY, OutcomeKind.LATE):
        return replace(p, photon_count=0)
    bit = window_bits(erp)[seen.kind]
    return replace(p, prepared_state=B92_STATES[bit], photon_count=int(_resend_count(cfg, rng)))


def eve_process_batch(state_index: np.ndarray, photons: np.ndarray, cfg: EveConfig, rp: ReceiverParams, rng: np.random.Generator):
    """Vectorised :func:`eve_process`; returns the replacement ``(state_index, photons)``."""
    if not cfg.active:
        return state_index, photons
    erp = eve_receiver(rp)
    seen = receive_batch(state_index, photons, erp, cfg.eve_detector, rng)
    to_bit = window_bits(erp)
    early = seen.kind == 1
    late = seen.kind == 2
    new_state = np.where(early, to_bit[OutcomeKind.EARLY], to_bit[OutcomeKind.LATE]).astype(state_index.dtype)
    conclusive = early | late
    new_photons = np.zeros_like(photons)
    new_photons[conclusive] = _resend_count(cfg, rng, int(conclusive.sum()))
    return np.where(conclusive, new_state, state_index), new_photons


@dataclass(frozen=True)
class DualFireStats:
    dual_fires: int
    pulses: int
    dual_rate: float
    ci_low: float
    ci_high: float
    baseline_rate: float | None = None
    ratio: float | None = None
    z_score: float | None = None


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> float:
    """z statistic for the first proportion exceeding the second (pooled variance)."""
    if n1 == 0 or n2 == 0:
        return 0.0
    p = (k1 + k2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    diff = k1 / n1 - k2 / n2
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / se


def dual_fire_stats(run, baseline=None) -> DualFireStats:
    """Dual-fire frequency of a run, optionally compared with a no-Eve baseline.

    ``run`` and ``baseline`` are anything with ``pulses``, ``dual_fires`` and
    ``detector_count`` attributes, e.g. a :class:`StatsReport`.
    """
    if run.detector_count != 2:
        raise UnsupportedConfiguration("dual-fire monitoring needs detector_count = 2")
    lo, hi = wilson_interval(run.dual_fires, run.pulses)
    rate = run.dual_fires / run.pulses if run.pulses else 0.0
    if baseline is None:
        return DualFireStats(run.dual_fires, run.pulses, rate, lo, hi)
    if baseline.detector_count != 2:
        raise UnsupportedConfiguration("baseline run needs detector_count = 2")
    base = baseline.dual_fires / baseline.pulses if baseline.pulses else 0.0
    ratio = rate / base if base else (math.inf if rate else 1.0)
    z = two_proportion_z(run.dual_fires, run.pulses, baseline.dual_fires, baseline.pulses)
    return DualFireStats(run.dual_fires, run.pulses, rate, lo, hi, base, ratio, z)

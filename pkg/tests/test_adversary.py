import math
from dataclasses import dataclass

import numpy as np
import pytest

from freespace_qkd.adversary import (
    EveConfig,
    dual_fire_stats,
    eve_process,
    eve_process_batch,
    two_proportion_z,
    wilson_interval,
)
from freespace_qkd.errors import ConfigError, UnsupportedConfiguration
from freespace_qkd.link_sim import B92_STATES, DetectorParams, OutcomeKind, PulseRecord, ReceiverParams, receive_batch

QUIET = DetectorParams(dark_rate=0, background_rate=0, afterpulse_prob_per_slot=0, reflection_late_click_prob=0)


def test_no_eve_is_pass_through(rng):
    bits = rng.integers(0, 2, 1000)
    photons = rng.poisson(0.014, 1000)
    s, p = eve_process_batch(bits, photons, EveConfig(), ReceiverParams(), rng)
    assert s is bits and p is photons
    rec = PulseRecord(0, 1, B92_STATES[1], 2)
    assert eve_process(rec, EveConfig(), ReceiverParams(), rng) is rec


def test_eve_replaces_with_her_guess(rng):
    cfg = EveConfig(strategy="intercept_resend")
    n = 50_000
    bits = rng.integers(0, 2, n)
    s, p = eve_process_batch(bits, np.full(n, 5), cfg, ReceiverParams(), rng)
    sent = p > 0
    assert 0 < sent.mean() < 1
    # Eve's ideal detector never misidentifies a pulse she conclusively saw
    assert np.array_equal(s[sent], bits[sent])


def test_vacuum_yields_nothing(rng):
    cfg = EveConfig(strategy="intercept_resend")
    s, p = eve_process_batch(np.zeros(100, np.int64), np.zeros(100, np.int64), cfg, ReceiverParams(), rng)
    assert (p == 0).all()


def test_bright_resend_always_clicks_bob(rng):
    cfg = EveConfig(strategy="intercept_resend", resend_mode="bright")
    rp = ReceiverParams(detector_count=2)
    n = 5000
    bits = rng.integers(0, 2, n)
    s, p = eve_process_batch(bits, np.full(n, 20), cfg, rp, rng)
    out = receive_batch(s, p, rp, QUIET, rng)
    sent = p > 0
    assert (out.kind[sent] != 0).all()
    assert (out.kind[sent] == 3).mean() > 0.99


def test_scalar_eve_bright(rng):
    cfg = EveConfig(strategy="intercept_resend", resend_mode="bright")
    rec = PulseRecord(0, 0, B92_STATES[0], 50)
    seen = [eve_process(rec, cfg, ReceiverParams(), rng) for _ in range(200)]
    assert {r.photon_count for r in seen} <= {0, cfg.bright_photons}
    assert all(r.prepared_state.same_as(B92_STATES[0]) for r in seen if r.photon_count)


def test_config_validation():
    with pytest.raises(ConfigError):
        EveConfig(strategy="beam_split")
    with pytest.raises(ConfigError):
        EveConfig(bright_photons=10)


@dataclass
class _Run:
    pulses: int
    dual_fires: int
    detector_count: int = 2


def test_dual_fire_stats():
    s = dual_fire_stats(_Run(10**6, 3400), _Run(10**6, 11))
    assert s.ratio == pytest.approx(3400 / 11)
    assert s.z_score > 5
    assert s.ci_low < s.dual_rate < s.ci_high
    with pytest.raises(UnsupportedConfiguration):
        dual_fire_stats(_Run(10, 0, detector_count=1))


def test_wilson_and_z():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.03 < hi < 0.04
    assert two_proportion_z(50, 100, 50, 100) == 0.0
    # textbook example: 0.6 vs 0.5 with n = 100 each
    assert two_proportion_z(60, 100, 50, 100) == pytest.approx(0.1 / math.sqrt(0.55 * 0.45 * 0.02))

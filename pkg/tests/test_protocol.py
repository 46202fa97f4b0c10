import numpy as np
import pytest

from freespace_qkd.errors import ConfigError, ProtocolAbort
from freespace_qkd.harness.transport import MessageLog, run_pair
from freespace_qkd.link_sim import Cause, DetectionOutcome, OutcomeKind, TimingConvention
from freespace_qkd.protocol import (
    DISCARD,
    DUAL_FLAG,
    ProtocolConfig,
    alice_generate_bits,
    alice_sift_party,
    bb84_sift,
    bob_infer,
    bob_sift_party,
    estimate_ber,
    sample_size,
    sift,
)


def test_alice_bits_deterministic():
    a = alice_generate_bits(1000, np.random.default_rng(3))
    b = alice_generate_bits(1000, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert set(np.unique(a)) == {0, 1}
    with pytest.raises(ValueError):
        alice_generate_bits(-1, np.random.default_rng())


def test_bob_infer_windows():
    early = DetectionOutcome(OutcomeKind.EARLY, Cause.SIGNAL, 1)
    late = DetectionOutcome(OutcomeKind.LATE, Cause.SIGNAL, 1)
    assert bob_infer(early) == 0 and bob_infer(late) == 1
    swapped = ProtocolConfig(timing=TimingConvention.SWAPPED)
    assert bob_infer(early, swapped) == 1 and bob_infer(late, swapped) == 0
    assert bob_infer(DetectionOutcome(OutcomeKind.DUAL, Cause.SIGNAL, None)) == DUAL_FLAG
    assert bob_infer(DetectionOutcome(OutcomeKind.NONE)) == DISCARD
    assert bob_infer(DetectionOutcome(OutcomeKind.EARLY, Cause.SIGNAL, 2)) == DISCARD


def test_sift_keeps_only_conclusive_slots():
    alice = np.array([0, 1, 1, 0, 1, 0, 0, 1], np.uint8)
    det = [(1, 1), (2, DUAL_FLAG), (3, 0), (4, DISCARD), (6, 1)]
    r = sift(det, alice)
    assert r.kept_slots.tolist() == [1, 3, 6]
    assert r.alice_key.tolist() == [1, 0, 0]
    assert r.bob_key.tolist() == [1, 0, 1]
    assert r.dual_fire_count == 1 and r.discarded_noise_slots == 1


def test_sift_empty():
    r = sift([], np.zeros(10, np.uint8))
    assert len(r.alice_key) == len(r.bob_key) == 0


def test_sift_announcement_holds_only_slots():
    log = MessageLog()
    alice = np.array([1, 0, 1, 1], np.uint8)
    run_pair(lambda ep: alice_sift_party(ep, alice), lambda ep: bob_sift_party(ep, [(0, 1), (2, 0)]),
             session_id="t", on_send=log)
    announce = [r for r in log.records if r["kind"] == "sift_announce"]
    assert len(announce) == 1
    assert announce[0]["payload"]["slots"] == [0, 2]
    assert announce[0]["payload"].get("bases", []) == []


def test_sift_out_of_range_aborts():
    with pytest.raises(ProtocolAbort):
        sift([(10, 1)], np.zeros(5, np.uint8))


@pytest.mark.parametrize("channel", ["in_process", "socket"])
def test_sift_channels_agree(channel, rng):
    alice = rng.integers(0, 2, 500).astype(np.uint8)
    det = [(i, int(rng.integers(0, 2))) for i in sorted(rng.choice(500, 60, replace=False).tolist())]
    r = sift(det, alice, channel=channel)
    assert r.kept_slots.tolist() == [s for s, _ in det]


def test_sample_size():
    assert sample_size(0, 0.1) == 0
    assert sample_size(100, 0.1) == 10
    assert sample_size(3, 0.1) == 1
    assert sample_size(100, 0.0) == 0


def test_estimate_ber_identical_and_complement(rng):
    a = rng.integers(0, 2, 1000).astype(np.uint8)
    est, ra, rb = estimate_ber(a, a.copy(), 0.1, rng)
    assert est == 0.0 and len(ra) == len(rb) == 900 and np.array_equal(ra, rb)
    est, ra, rb = estimate_ber(a, 1 - a, 0.1, rng)
    assert est == 1.0 and len(ra) == 900


def test_estimate_ber_tracks_true_rate(rng):
    n, p = 20_000, 0.06
    a = rng.integers(0, 2, n).astype(np.uint8)
    b = a ^ (rng.random(n) < p).astype(np.uint8)
    true = float((a != b).mean())
    est, _, _ = estimate_ber(a, b, 0.1, rng)
    assert abs(est - true) < 4 * np.sqrt(true * (1 - true) / 2000)


def test_estimate_ber_length_mismatch():
    with pytest.raises(ProtocolAbort):
        estimate_ber(np.zeros(5, np.uint8), np.zeros(6, np.uint8), 0.1, np.random.default_rng())


def test_bb84_sift_keeps_matching_bases(rng):
    n = 20_000
    ab, bb = rng.integers(0, 2, n), rng.integers(0, 2, n)
    bits = rng.integers(0, 2, n).astype(np.uint8)
    results = np.where(ab == bb, bits, rng.integers(0, 2, n)).astype(np.int64)
    r = bb84_sift(ab, bits, bb, results)
    assert abs(len(r.kept_slots) / n - 0.5) < 4 * np.sqrt(0.25 / n)
    assert np.array_equal(r.alice_key, r.bob_key)


def test_bb84_sift_skips_missing_and_double_clicks():
    ab = np.array([0, 0, 1, 1])
    r = bb84_sift(ab, np.array([1, 0, 1, 0]), ab, np.array([1, -1, -2, 0]))
    assert r.kept_slots.tolist() == [0, 3]
    assert r.dual_fire_count == 1


def test_protocol_config_validation():
    with pytest.raises(ConfigError):
        ProtocolConfig(protocol="E91")
    with pytest.raises(ConfigError):
        ProtocolConfig(ber_sample_fraction=0.9)

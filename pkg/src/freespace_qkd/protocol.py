"""Alice and Bob: detection interpretation, sifting and BER sampling.

Every exchange is written as a pair of party functions that talk only through
an endpoint from :mod:`freespace_qkd.harness.transport`; the module-level
helpers (:func:`sift`, :func:`estimate_ber`, :func:`bb84_sift`) run both
parties over a fresh channel for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ProtocolAbort
from .harness.messages import MessageKind
from .harness.transport import run_pair
from .link_sim import DetectionOutcome, OutcomeKind, ReceiverParams, TimingConvention, window_bits

DISCARD = "discard"
DUAL_FLAG = "dual"


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str = "B92"
    timing: TimingConvention = TimingConvention.OPTICS
    ber_sample_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.protocol not in ("B92", "BB84"):
            raise ConfigError("protocol.protocol", "must be 'B92' or 'BB84'")
        if not 0.0 <= self.ber_sample_fraction <= 0.5:
            raise ConfigError("protocol.ber_sample_fraction", "must lie in [0, 0.5]")
        object.__setattr__(self, "timing", TimingConvention(self.timing))

    @property
    def window_to_bit(self) -> dict[OutcomeKind, int]:
        return window_bits(ReceiverParams(timing=self.timing))


@dataclass
class SiftResult:
    kept_slots: np.ndarray
    alice_key: np.ndarray
    bob_key: np.ndarray
    dual_fire_count: int = 0
    discarded_noise_slots: int = 0

    def __post_init__(self) -> None:
        if not len(self.alice_key) == len(self.bob_key) == len(self.kept_slots):
            raise ValueError("sift result keys and slots must have equal length")


def alice_generate_bits(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be >= 0")
    return rng.integers(0, 2, n, dtype=np.uint8)


def bob_infer(o: DetectionOutcome, cfg: ProtocolConfig | None = None):
    """Bit value for a detection, or :data:`DISCARD` / :data:`DUAL_FLAG`.

    Only detector 1 sits on the conclusive outputs; a lone click on detector
    2 says nothing about the bit and is discarded.
    """
    cfg = cfg or ProtocolConfig()
    if o.kind is OutcomeKind.DUAL:
        return DUAL_FLAG
    if o.kind is OutcomeKind.NONE or (o.detector_id or 1) != 1:
        return DISCARD
    return cfg.window_to_bit[o.kind]


# --------------------------------------------------------------------------
# sifting


def _as_bits(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint8)


def bob_sift_party(endpoint, detections: Sequence[tuple[int, object]]):
    """Announce the slots where Bob holds a bit; returns (slots, key, duals, discards)."""
    slots, key = [], []
    duals = discards = 0
    for slot, inferred in detections:
        if inferred == DUAL_FLAG:
            duals += 1
        elif inferred == DISCARD:
            discards += 1
        else:
            slots.append(int(slot))
            key.append(int(inferred))
    slots_arr = np.asarray(slots, dtype=np.int64)
    if len(slots_arr) > 1 and not (np.diff(slots_arr) > 0).all():
        endpoint.abort("slot indices not strictly increasing")
        raise ProtocolAbort("sift: detection slots must be strictly increasing")
    endpoint.send(MessageKind.SIFT_ANNOUNCE, slots=slots_arr)
    ack = endpoint.recv(MessageKind.SIFT_ACK)
    if ack.payload["count"] != len(slots_arr):
        endpoint.abort("acknowledged count differs")
        raise ProtocolAbort("sift: Alice acknowledged a different number of slots")
    return slots_arr, _as_bits(key), duals, discards


def alice_sift_party(endpoint, alice_bits) -> tuple[np.ndarray, np.ndarray]:
    alice_bits = _as_bits(alice_bits)
    msg = endpoint.recv(MessageKind.SIFT_ANNOUNCE)
    slots = np.asarray(msg.payload["slots"], dtype=np.int64)
    if len(slots) and (slots.max() >= len(alice_bits)):
        endpoint.abort(f"slot index {int(slots.max())} out of range")
        raise ProtocolAbort(f"sift: slot index {int(slots.max())} out of range for {len(alice_bits)} pulses")
    if len(slots) > 1 and not (np.diff(slots) > 0).all():
        endpoint.abort("slot indices not strictly increasing")
        raise ProtocolAbort("sift: announced slots not strictly increasing")
    endpoint.send(MessageKind.SIFT_ACK, count=len(slots))
    return slots, alice_bits[slots]


def sift(bob_detections, alice_bits, channel: str = "in_process") -> SiftResult:
    (slots, a_key), (_, b_key, duals, discards) = run_pair(
        lambda ep: alice_sift_party(ep, alice_bits),
        lambda ep: bob_sift_party(ep, bob_detections),
        mode=channel,
        session_id="sift",
    )
    return SiftResult(slots, a_key, b_key, duals, discards)


# --------------------------------------------------------------------------
# BER sampling


def sample_size(n: int, fraction: float) -> int:
    if n == 0 or fraction <= 0:
        return 0
    return min(n, max(1, int(round(fraction * n))))


def bob_ber_party(endpoint, b_key, fraction: float, rng: np.random.Generator):
    """Bob picks and discloses the sample; returns (estimate, remaining key)."""
    b_key = _as_bits(b_key)
    k = sample_size(len(b_key), fraction)
    positions = np.sort(rng.choice(len(b_key), size=k, replace=False)) if k else np.zeros(0, np.int64)
    endpoint.send(MessageKind.BER_SAMPLE, key_length=len(b_key), positions=positions, bits=b_key[positions])
    reply = endpoint.recv(MessageKind.BER_REPLY)
    theirs = _as_bits(reply.payload["bits"])
    estimate = float((theirs != b_key[positions]).mean()) if k else 0.0
    return estimate, np.delete(b_key, positions)


def alice_ber_party(endpoint, a_key):
    a_key = _as_bits(a_key)
    msg = endpoint.recv(MessageKind.BER_SAMPLE)
    if msg.payload["key_length"] != len(a_key):
        endpoint.abort("key length mismatch")
        raise ProtocolAbort(f"estimate_ber: key lengths differ ({len(a_key)} vs {msg.payload['key_length']})")
    positions = np.asarray(msg.payload["positions"], dtype=np.int64)
    if len(positions) and positions.max() >= len(a_key):
        endpoint.abort("sample position out of range")
        raise ProtocolAbort("estimate_ber: sample position out of range")
    endpoint.send(MessageKind.BER_REPLY, bits=a_key[positions])
    theirs = _as_bits(msg.payload["bits"])
    estimate = float((theirs != a_key[positions]).mean()) if len(positions) else 0.0
    return estimate, np.delete(a_key, positions)


def estimate_ber(a_key, b_key, fraction: float, rng: np.random.Generator, channel: str = "in_process"):
    """Disclose a random sample, compare it, and drop it from both keys.

    Returns ``(estimate, remaining_a, remaining_b)``.
    """
    if len(a_key) != len(b_key):
        raise ProtocolAbort(f"estimate_ber: key lengths differ ({len(a_key)} vs {len(b_key)})")
    (est, rem_a), (_, rem_b) = run_pair(
        lambda ep: alice_ber_party(ep, a_key),
        lambda ep: bob_ber_party(ep, b_key, fraction, rng),
        mode=channel,
        session_id="ber",
    )
    return est, rem_a, rem_b


# --------------------------------------------------------------------------
# BB84 basis reconciliation


def bob_bb84_party(endpoint, bob_bases, bob_results):
    """``bob_results`` holds 0/1 for a detection, -1 for none, -2 for a double click."""
    results = np.asarray(bob_results, dtype=np.int64)
    bases = _as_bits(bob_bases)
    detected = np.flatnonzero(results >= 0)
    endpoint.send(MessageKind.SIFT_ANNOUNCE, slots=detected, bases=bases[detected])
    ack = endpoint.recv(MessageKind.SIFT_ACK)
    keep = np.asarray(ack.payload["keep"], dtype=bool)
    if len(keep) != len(detected) or ack.payload["count"] != int(keep.sum()):
        endpoint.abort("malformed basis acknowledgement")
        raise ProtocolAbort("bb84_sift: malformed basis acknowledgement")
    slots = detected[keep]
    return slots, results[slots].astype(np.uint8), int((results == -2).sum())


def alice_bb84_party(endpoint, alice_bases, alice_bits):
    bases = _as_bits(alice_bases)
    bits = _as_bits(alice_bits)
    msg = endpoint.recv(MessageKind.SIFT_ANNOUNCE)
    slots = np.asarray(msg.payload["slots"], dtype=np.int64)
    if len(slots) and slots.max() >= len(bits):
        endpoint.abort("slot index out of range")
        raise ProtocolAbort("bb84_sift: slot index out of range")
    keep = bases[slots] == _as_bits(msg.payload["bases"])
    endpoint.send(MessageKind.SIFT_ACK, count=int(keep.sum()), keep=keep.astype(np.uint8))
    return slots[keep], bits[slots[keep]]


def bb84_sift(alice_bases, alice_bits, bob_bases, bob_results, channel: str = "in_process") -> SiftResult:
    n = len(alice_bits)
    if not (len(alice_bases) == n == len(bob_bases) == len(bob_results)):
        raise ProtocolAbort("bb84_sift: input lengths differ")
    (slots, a_key), (_, b_key, duals) = run_pair(
        lambda ep: alice_bb84_party(ep, alice_bases, alice_bits),
        lambda ep: bob_bb84_party(ep, bob_bases, bob_results),
        mode=channel,
        session_id="bb84-sift",
    )
    return SiftResult(slots, a_key, b_key, dual_fire_count=duals)

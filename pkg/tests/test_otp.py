import threading

import numpy as np
import pytest

from freespace_qkd.errors import KeyExhausted
from freespace_qkd.otp import KeyLedger, KeyReuseError, bits_to_bytes, bytes_to_bits, otp_decrypt, otp_encrypt


def test_xor_example():
    ct, ledger = otp_encrypt(KeyLedger([1, 1, 0, 0]), [1, 0, 1, 0])
    assert ct.tolist() == [0, 1, 1, 0]
    assert ledger.consumed_watermark == 4


def test_roundtrip_uses_matching_ledgers(rng):
    key = rng.integers(0, 2, 4096).astype(np.uint8)
    alice, bob = KeyLedger(key), KeyLedger(key)
    for _ in range(50):
        m = rng.integers(0, 2, 64).astype(np.uint8)
        ct, _ = otp_encrypt(alice, m)
        pt, _ = otp_decrypt(bob, ct)
        assert np.array_equal(pt, m)
    assert alice.consumed_watermark == bob.consumed_watermark == 3200
    assert alice.audit_ok()


def test_exhaustion():
    ledger = KeyLedger(np.zeros(10, np.uint8))
    otp_encrypt(ledger, np.zeros(8, np.uint8))
    with pytest.raises(KeyExhausted):
        otp_encrypt(ledger, np.zeros(3, np.uint8))
    assert ledger.consumed_watermark == 8


def test_reuse_refused():
    ledger = KeyLedger(np.zeros(32, np.uint8))
    ledger.take(16, start=0)
    with pytest.raises(KeyReuseError):
        ledger.take(4, start=0)
    assert ledger.take(4, start=16).size == 4


def test_key_store_read_only():
    ledger = KeyLedger(np.zeros(8, np.uint8))
    with pytest.raises(ValueError):
        ledger.key_store[0] = 1


def test_concurrent_takes_are_disjoint():
    ledger = KeyLedger(np.arange(8000) % 2)
    starts = []

    def worker():
        for _ in range(100):
            ledger.take(10)
            starts.append(ledger.audit[-1].start)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert ledger.consumed_watermark == 8000
    assert ledger.audit_ok()


def test_bytes_bits_roundtrip():
    data = b"\x00\xffqkd"
    assert bits_to_bytes(bytes_to_bits(data)) == data
    with pytest.raises(ValueError):
        bits_to_bytes([1, 0, 1])

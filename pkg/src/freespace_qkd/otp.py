"""Vernam one-time pad over distilled key bits.

A :class:`KeyLedger` hands out key bits strictly in order and never moves its
watermark backwards, so no key bit can be used twice.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import KeyExhausted


class KeyReuseError(RuntimeError):
    pass


@dataclass(frozen=True)
class Consumption:
    start: int
    stop: int
    purpose: str


class KeyLedger:
    def __init__(self, key_store, consumed_watermark: int = 0):
        self.key_store = np.asarray(key_store, dtype=np.uint8).copy()
        self.key_store.flags.writeable = False
        if not 0 <= consumed_watermark <= len(self.key_store):
            raise ValueError("watermark outside the key")
        self._watermark = consumed_watermark
        self._lock = threading.Lock()
        self.audit: list[Consumption] = []

    @property
    def consumed_watermark(self) -> int:
        return self._watermark

    @property
    def available(self) -> int:
        return len(self.key_store) - self._watermark

    def take(self, n: int, purpose: str = "", start: int | None = None) -> np.ndarray:
        """Issue the next ``n`` unused key bits.

        ``start`` lets a caller assert where it expects the pad to begin; a
        start below the watermark is a reuse attempt and is refused.
        """
        with self._lock:
            if start is not None and start != self._watermark:
                if start < self._watermark:
                    raise KeyReuseError(f"key bits from {start} were already consumed (watermark {self._watermark})")
                raise KeyReuseError(f"pad position {start} does not match watermark {self._watermark}")
            if n > self.available:
                raise KeyExhausted(n, self.available)
            lo = self._watermark
            self._watermark += n
            if n:
                self.audit.append(Consumption(lo, self._watermark, purpose))
            return self.key_store[lo : self._watermark]

    def audit_ok(self) -> bool:
        """True if consumed ranges are contiguous, ordered and disjoint."""
        pos = self.audit[0].start if self.audit else 0
        for c in self.audit:
            if c.start != pos or c.stop <= c.start:
                return False
            pos = c.stop
        return pos <= self._watermark


def _xor(bits, pad) -> np.ndarray:
    return np.bitwise_xor(np.asarray(bits, dtype=np.uint8), pad)


def otp_encrypt(ledger: KeyLedger, plaintext) -> tuple[np.ndarray, KeyLedger]:
    pad = ledger.take(len(plaintext), "encrypt")
    return _xor(plaintext, pad), ledger


def otp_decrypt(ledger: KeyLedger, ciphertext) -> tuple[np.ndarray, KeyLedger]:
    pad = ledger.take(len(ciphertext), "decrypt")
    return _xor(ciphertext, pad), ledger


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) % 8:
        raise ValueError("bit count is not a whole number of bytes")
    return np.packbits(bits).tobytes()

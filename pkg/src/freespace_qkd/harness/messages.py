"""Classical-channel messages and their binary wire encoding.

Frame layout (all integers big-endian)::

    u32   frame length (bytes that follow)
    u8    encoding version (currently 1)
    u8    message kind
    u16   session id length, then UTF-8 session id
    u64   sequence number
    ...   payload fields in schema order

Payload field encodings:

    int    i64
    uints  u32 count, then count x u64
    bits   u32 bit count, then the bits packed MSB-first, zero padded
    str    u32 byte length, then UTF-8
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import ProtocolAbort

WIRE_VERSION = 1
MAX_FRAME = 256 * 1024 * 1024
_LEN = struct.Struct(">I")
_HEAD = struct.Struct(">BB")


class MessageKind(enum.IntEnum):
    SIFT_ANNOUNCE = 1
    SIFT_ACK = 2
    BER_SAMPLE = 3
    BER_REPLY = 4
    PARITY_EXCHANGE = 5
    ABORT = 6


SCHEMA: dict[MessageKind, tuple[tuple[str, str], ...]] = {
    # bases is empty for B92, Bob's basis per announced slot for BB84
    MessageKind.SIFT_ANNOUNCE: (("slots", "uints"), ("bases", "bits")),
    # keep is empty for B92, Alice's basis-match flags for BB84
    MessageKind.SIFT_ACK: (("count", "int"), ("keep", "bits")),
    MessageKind.BER_SAMPLE: (("key_length", "int"), ("positions", "uints"), ("bits", "bits")),
    MessageKind.BER_REPLY: (("bits", "bits"),),
    MessageKind.PARITY_EXCHANGE: (("pass_index", "int"), ("key_length", "int"), ("rows", "bits"), ("cols", "bits")),
    MessageKind.ABORT: (("reason", "str"),),
}


class DecodeError(ProtocolAbort):
    pass


def _normalize(kind: str, value: Any) -> Any:
    if kind == "int":
        return int(value)
    if kind == "str":
        return str(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    out = tuple(int(v) for v in value)
    if kind == "bits" and any(v not in (0, 1) for v in out):
        raise ValueError("bit fields may only hold 0 and 1")
    if kind == "uints" and any(v < 0 for v in out):
        raise ValueError("uint fields may not be negative")
    return out


@dataclass(frozen=True)
class ClassicalMessage:
    session_id: str
    sequence_number: int
    kind: MessageKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        try:
            kind = MessageKind(self.kind)
        except ValueError:
            raise DecodeError(f"unknown message kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        schema = SCHEMA[kind]
        names = {n for n, _ in schema}
        extra = set(self.payload) - names
        if extra:
            raise ValueError(f"{kind.name}: unexpected payload fields {sorted(extra)}")
        norm = {}
        for name, ftype in schema:
            if name in self.payload:
                norm[name] = _normalize(ftype, self.payload[name])
            else:
                norm[name] = {"int": 0, "str": ""}.get(ftype, ())
        object.__setattr__(self, "payload", norm)

    def to_record(self) -> dict:
        return {
            "session_id": self.session_id,
            "seq": self.sequence_number,
            "kind": self.kind.name.lower(),
            "payload": {k: list(v) if isinstance(v, tuple) else v for k, v in self.payload.items()},
        }


def encode(msg: ClassicalMessage) -> bytes:
    sid = msg.session_id.encode()
    parts = [_HEAD.pack(WIRE_VERSION, int(msg.kind)), struct.pack(">H", len(sid)), sid, struct.pack(">Q", msg.sequence_number)]
    for name, ftype in SCHEMA[msg.kind]:
        value = msg.payload[name]
        if ftype == "int":
            parts.append(struct.pack(">q", value))
        elif ftype == "str":
            raw = value.encode()
            parts.append(_LEN.pack(len(raw)) + raw)
        elif ftype == "uints":
            parts.append(_LEN.pack(len(value)) + np.asarray(value, dtype=">u8").tobytes())
        else:
            parts.append(_LEN.pack(len(value)) + np.packbits(np.asarray(value, dtype=np.uint8)).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated message")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def decode(data: bytes) -> ClassicalMessage:
    r = _Reader(data)
    version, kind_code = r.unpack(">BB")
    if version != WIRE_VERSION:
        raise DecodeError(f"unsupported wire version {version}")
    try:
        kind = MessageKind(kind_code)
    except ValueError:
        raise DecodeError(f"unknown message kind {kind_code}") from None
    (sid_len,) = r.unpack(">H")
    session_id = r.take(sid_len).decode()
    (seq,) = r.unpack(">Q")
    payload: dict[str, Any] = {}
    for name, ftype in SCHEMA[kind]:
        if ftype == "int":
            (payload[name],) = r.unpack(">q")
        elif ftype == "str":
            (n,) = r.unpack(">I")
            payload[name] = r.take(n).decode()
        elif ftype == "uints":
            (n,) = r.unpack(">I")
            payload[name] = np.frombuffer(r.take(8 * n), dtype=">u8").tolist()
        else:
            (n,) = r.unpack(">I")
            packed = np.frombuffer(r.take((n + 7) // 8), dtype=np.uint8)
            bits = np.unpackbits(packed)
            if bits[n:].any():
                raise DecodeError("nonzero padding in bit field")
            payload[name] = bits[:n]
    if r.pos != len(data):
        raise DecodeError("trailing bytes after payload")
    return ClassicalMessage(session_id, seq, kind, payload)


def frame(msg: ClassicalMessage) -> bytes:
    body = encode(msg)
    return _LEN.pack(len(body)) + body


def frame_length(header: bytes) -> int:
    (n,) = _LEN.unpack(header)
    if n > MAX_FRAME:
        raise DecodeError(f"frame too large ({n} bytes)")
    return n

import struct
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freespace_qkd.errors import ProtocolAbort
from freespace_qkd.harness.messages import (
    ClassicalMessage,
    DecodeError,
    MessageKind,
    decode,
    encode,
    frame,
    frame_length,
)
from freespace_qkd.harness.transport import MessageLog, PeerAborted, in_process_pair, run_pair, socket_pair


def _msg(kind=MessageKind.SIFT_ANNOUNCE, seq=1, **payload):
    return ClassicalMessage("s", seq, kind, payload)


@given(
    slots=st.lists(st.integers(0, 2**63), max_size=50),
    bits=st.lists(st.integers(0, 1), max_size=50),
    seq=st.integers(1, 2**40),
)
def test_roundtrip_sift_announce(slots, bits, seq):
    m = _msg(seq=seq, slots=slots, bases=bits)
    assert decode(encode(m)) == m


@pytest.mark.parametrize(
    "kind,payload",
    [
        (MessageKind.SIFT_ACK, dict(count=3, keep=[1, 0, 1])),
        (MessageKind.BER_SAMPLE, dict(key_length=10, positions=[1, 4], bits=[0, 1])),
        (MessageKind.BER_REPLY, dict(bits=[1] * 9)),
        (MessageKind.PARITY_EXCHANGE, dict(pass_index=1, key_length=32, rows=[0, 1] * 4, cols=[1] * 8)),
        (MessageKind.ABORT, dict(reason="déjà vu")),
    ],
)
def test_roundtrip_every_kind(kind, payload):
    m = _msg(kind, 7, **payload)
    assert decode(encode(m)) == m
    framed = frame(m)
    assert frame_length(framed[:4]) == len(framed) - 4


def test_wire_layout():
    raw = encode(_msg(MessageKind.SIFT_ACK, 2, count=5))
    assert raw[:2] == bytes([1, 2])
    assert struct.unpack(">H", raw[2:4])[0] == 1 and raw[4:5] == b"s"
    assert struct.unpack(">Q", raw[5:13])[0] == 2
    assert struct.unpack(">q", raw[13:21])[0] == 5


def test_decode_rejects_garbage():
    good = encode(_msg(MessageKind.BER_REPLY, 1, bits=[1, 0, 1]))
    with pytest.raises(DecodeError):
        decode(b"\x02" + good[1:])  # wrong version
    with pytest.raises(DecodeError):
        decode(good[:-1])
    with pytest.raises(DecodeError):
        decode(good + b"\x00")
    with pytest.raises(DecodeError):
        decode(good[:-1] + bytes([good[-1] | 1]))  # nonzero pad bit
    with pytest.raises(DecodeError):
        decode(bytes([1, 99]) + good[2:])


def test_payload_validation():
    with pytest.raises(ValueError):
        _msg(MessageKind.BER_REPLY, bits=[2])
    with pytest.raises(ValueError):
        _msg(MessageKind.BER_REPLY, nonsense=1)
    assert _msg(MessageKind.BER_REPLY, bits=np.array([1, 0])).payload["bits"] == (1, 0)


def test_out_of_order_rejected():
    alice, bob = in_process_pair("s")
    bob.inject(ClassicalMessage("s", 2, MessageKind.BER_REPLY, {"bits": [1]}))
    with pytest.raises(ProtocolAbort, match="out-of-order"):
        bob.recv()
    # Bob's abort reaches Alice as a peer abort
    with pytest.raises(PeerAborted):
        alice.recv(timeout=1)


def test_foreign_session_rejected():
    _, bob = in_process_pair("s")
    bob.inject(ClassicalMessage("other", 1, MessageKind.BER_REPLY, {"bits": [1]}))
    with pytest.raises(ProtocolAbort, match="foreign"):
        bob.recv()


def test_unexpected_kind_rejected():
    alice, bob = in_process_pair("s")
    alice.send(MessageKind.BER_REPLY, bits=[1])
    with pytest.raises(ProtocolAbort, match="expected"):
        bob.recv(MessageKind.SIFT_ACK)


def _ping_pong(n):
    def alice(ep):
        got = []
        for i in range(n):
            ep.send(MessageKind.PARITY_EXCHANGE, pass_index=i, key_length=i, rows=[i % 2], cols=[])
            got.append(ep.recv(MessageKind.BER_REPLY).payload["bits"])
        return got

    def bob(ep):
        for _ in range(n):
            m = ep.recv(MessageKind.PARITY_EXCHANGE)
            ep.send(MessageKind.BER_REPLY, bits=m.payload["rows"])
        return n

    return alice, bob


@pytest.mark.parametrize("mode", ["in_process", "socket"])
def test_run_pair_transports_agree(mode):
    log = MessageLog()
    a, b = run_pair(*_ping_pong(20), mode=mode, session_id="pp", on_send=log)
    assert a == [(i % 2,) for i in range(20)] and b == 20
    assert [r["seq"] for r in log.records if r["from"] == "alice"] == list(range(1, 21))
    assert len(log.records) == 40


def test_socket_logs_match_in_process():
    logs = []
    for mode in ("in_process", "socket"):
        log = MessageLog()
        run_pair(*_ping_pong(5), mode=mode, session_id="pp", on_send=log)
        logs.append(log.records)
    assert logs[0] == logs[1]


def test_failure_propagates_to_peer():
    def alice(ep):
        raise RuntimeError("boom")

    def bob(ep):
        ep.recv(timeout=5)

    with pytest.raises(RuntimeError, match="boom"):
        run_pair(alice, bob)


def test_socket_disconnect_aborts():
    alice, bob = socket_pair("s")
    alice.sock.close()
    with pytest.raises(PeerAborted):
        bob.recv(timeout=5)
    bob.close()


def test_in_process_close_aborts():
    alice, bob = in_process_pair("s")
    t = threading.Thread(target=alice.close)
    t.start()
    t.join()
    with pytest.raises(PeerAborted):
        bob.recv(timeout=1)

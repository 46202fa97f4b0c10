"""Ordered, reliable duplex pipes carrying :class:`ClassicalMessage` values.

Two transports share one endpoint contract: an in-process queue pair and a
TCP socket speaking the length-prefixed frames from :mod:`.messages`.
Endpoints number outgoing messages 1, 2, 3, ... and reject anything that
arrives out of sequence.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
from typing import Callable

from ..errors import ProtocolAbort
from .messages import ClassicalMessage, MessageKind, decode, frame, frame_length

log = logging.getLogger(__name__)

RECV_TIMEOUT = 120.0
_CLOSED = object()


class PeerAborted(ProtocolAbort):
    """The other party sent an abort message or went away."""


class MessageLog:
    """Thread-safe, append-only record of every message sent on a session."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.records: list[dict] = []

    def __call__(self, sender: str, msg: ClassicalMessage) -> None:
        rec = {"event": "message", "from": sender, **msg.to_record()}
        with self._lock:
            self.records.append(rec)


class Endpoint:
    def __init__(self, name: str, session_id: str, on_send: Callable[[str, ClassicalMessage], None] | None = None):
        self.name = name
        self.session_id = session_id
        self.on_send = on_send
        self._next_out = 1
        self._last_in = 0
        self.closed = False

    # transport hooks
    def _transmit(self, msg: ClassicalMessage) -> None:
        raise NotImplementedError

    def _receive(self, timeout: float) -> ClassicalMessage:
        raise NotImplementedError

    def send(self, kind: MessageKind, **payload) -> ClassicalMessage:
        if self.closed:
            raise ProtocolAbort(f"{self.name}: endpoint closed")
        msg = ClassicalMessage(self.session_id, self._next_out, kind, payload)
        self._next_out += 1
        # log before transmitting so the shared log follows causal order
        if self.on_send is not None:
            self.on_send(self.name, msg)
        self._transmit(msg)
        return msg

    def recv(self, *expected: MessageKind, timeout: float = RECV_TIMEOUT) -> ClassicalMessage:
        msg = self._receive(timeout)
        if msg.sequence_number != self._last_in + 1:
            self.abort(f"out-of-order message: expected seq {self._last_in + 1}, got {msg.sequence_number}")
            raise ProtocolAbort(f"{self.name}: out-of-order message (seq {msg.sequence_number})")
        self._last_in = msg.sequence_number
        if msg.session_id != self.session_id:
            self.abort("session id mismatch")
            raise ProtocolAbort(f"{self.name}: message for foreign session {msg.session_id!r}")
        if msg.kind is MessageKind.ABORT:
            self.close()
            raise PeerAborted(f"peer aborted: {msg.payload['reason']}")
        if expected and msg.kind not in expected:
            self.abort(f"unexpected {msg.kind.name}")
            raise ProtocolAbort(f"{self.name}: expected {[k.name for k in expected]}, got {msg.kind.name}")
        return msg

    def abort(self, reason: str) -> None:
        """Tell the peer the session is over, then close. Never raises."""
        if not self.closed:
            try:
                self.send(MessageKind.ABORT, reason=reason)
            except Exception:  # peer may already be gone
                log.debug("%s: abort not delivered", self.name)
        self.close()

    def close(self) -> None:
        self.closed = True


class InProcessEndpoint(Endpoint):
    def __init__(self, name, session_id, inbox: queue.Queue, outbox: queue.Queue, on_send=None):
        super().__init__(name, session_id, on_send)
        self.inbox = inbox
        self.outbox = outbox

    def _transmit(self, msg):
        self.outbox.put(msg)

    def _receive(self, timeout):
        try:
            item = self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolAbort(f"{self.name}: timed out waiting for peer") from None
        if item is _CLOSED:
            raise PeerAborted(f"{self.name}: peer disconnected")
        return item

    def inject(self, msg: ClassicalMessage) -> None:
        """Place a message directly in this endpoint's inbox (test hook)."""
        self.inbox.put(msg)

    def close(self):
        if not self.closed:
            self.outbox.put(_CLOSED)
        super().close()


class SocketEndpoint(Endpoint):
    def __init__(self, name, session_id, sock: socket.socket, on_send=None):
        super().__init__(name, session_id, on_send)
        self.sock = sock

    def _transmit(self, msg):
        try:
            self.sock.sendall(frame(msg))
        except OSError as exc:
            raise ProtocolAbort(f"{self.name}: send failed: {exc}") from exc

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(min(n - len(buf), 1 << 20))
            except socket.timeout:
                raise ProtocolAbort(f"{self.name}: timed out waiting for peer") from None
            except OSError as exc:
                raise ProtocolAbort(f"{self.name}: receive failed: {exc}") from exc
            if not chunk:
                raise PeerAborted(f"{self.name}: peer disconnected")
            buf += chunk
        return bytes(buf)

    def _receive(self, timeout):
        self.sock.settimeout(timeout)
        n = frame_length(self._read_exact(4))
        return decode(self._read_exact(n))

    def close(self):
        if not self.closed:
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()
        super().close()


def in_process_pair(session_id: str, on_send=None) -> tuple[InProcessEndpoint, InProcessEndpoint]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    alice = InProcessEndpoint("alice", session_id, inbox=b_to_a, outbox=a_to_b, on_send=on_send)
    bob = InProcessEndpoint("bob", session_id, inbox=a_to_b, outbox=b_to_a, on_send=on_send)
    return alice, bob


def listen(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    srv = socket.create_server((host, port))
    return srv


def accept(server: socket.socket, session_id: str, name: str = "alice", on_send=None, timeout: float = RECV_TIMEOUT) -> SocketEndpoint:
    server.settimeout(timeout)
    conn, _ = server.accept()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(name, session_id, conn, on_send)


def connect(host: str, port: int, session_id: str, name: str = "bob", on_send=None, timeout: float = RECV_TIMEOUT) -> SocketEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(name, session_id, sock, on_send)


def socket_pair(session_id: str, on_send=None, host: str = "127.0.0.1") -> tuple[SocketEndpoint, SocketEndpoint]:
    """Alice listens on an ephemeral localhost port and Bob connects to it."""
    with listen(host, 0) as srv:
        port = srv.getsockname()[1]
        bob = connect(host, port, session_id, on_send=on_send)
        alice = accept(srv, session_id, on_send=on_send)
    return alice, bob


def channel_transport(mode: str, session_id: str, on_send=None) -> tuple[Endpoint, Endpoint]:
    if mode == "in_process":
        return in_process_pair(session_id, on_send)
    if mode == "socket":
        return socket_pair(session_id, on_send)
    raise ValueError(f"unknown transport mode {mode!r}")


def run_pair(alice_fn, bob_fn, mode: str = "in_process", session_id: str = "session", on_send=None):
    """Run ``alice_fn(endpoint)`` and ``bob_fn(endpoint)`` concurrently.

    Returns both results. If either side fails, the peer is told to abort and
    the first failure is re-raised once both threads have finished.
    """
    alice_ep, bob_ep = channel_transport(mode, session_id, on_send)
    results: dict[str, object] = {}
    errors: dict[str, BaseException] = {}

    def wrap(name, fn, ep):
        try:
            results[name] = fn(ep)
        except BaseException as exc:  # noqa: BLE001 - re-raised by the caller thread
            errors[name] = exc
            ep.abort(f"{name} failed: {exc}")
        finally:
            ep.close()

    threads = [
        threading.Thread(target=wrap, args=("alice", alice_fn, alice_ep), name="alice"),
        threading.Thread(target=wrap, args=("bob", bob_fn, bob_ep), name="bob"),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        # prefer the side that failed for a real reason over the peer's abort notice
        primary = [e for e in errors.values() if not isinstance(e, PeerAborted)]
        raise (primary or list(errors.values()))[0]
    return results["alice"], results["bob"]

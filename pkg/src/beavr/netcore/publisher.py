"""TCP publishers: singleton per endpoint, bounded queue, handshake coordinator.

Each bound endpoint is serviced by exactly one dedicated sender thread that
owns the outbound sockets. Callers never block on the network: ``publish``
enqueues and returns; when the queue exceeds the high-water mark the oldest
frame is discarded.

A coordinator on ``port + 1`` answers subscriber sync polls with any pending
critical frames and collects their acknowledgements, which is what lets
``publish_critical`` survive slow joiners.
"""
from __future__ import annotations

import base64
import json
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass

from .frames import (
    ClosedHandleError,
    DeliveryReport,
    Endpoint,
    HandshakeTimeout,
    HandshakeToken,
    QueuePolicy,
    TopicFrame,
    TransportError,
    encode_frame,
)

_ACCEPT_POLL_S = 0.1
_SENDER_IDLE_S = 0.05


@dataclass
class PublishStatus:
    """Result of one enqueue: current depth plus drop bookkeeping."""

    queued: int
    dropped_now: int
    dropped_total: int


class _HandshakeCoordinator:
    """Request-reply ack collector on the publisher's side channel.

    One poll cycle from a subscriber is two JSON lines each way on a fresh
    connection: sync -> pending frames, ack -> ok. Acks are counted per
    message id over distinct subscriber ids.
    """

    def __init__(self, endpoint: Endpoint):
        self._endpoint = endpoint
        self._lock = threading.Lock()
        self._acked = threading.Condition(self._lock)
        self._pending: dict[int, tuple[str, bytes]] = {}  # id -> (topic, frame bytes)
        self._acks: dict[int, set[str]] = {}
        self._closed = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((endpoint.host, endpoint.handshake_port))
        except OSError as exc:
            self._sock.close()
            raise TransportError(
                f"cannot bind handshake channel tcp://{endpoint.host}:{endpoint.handshake_port}: {exc}"
            ) from exc
        self._sock.listen(32)
        self._sock.settimeout(_ACCEPT_POLL_S)
        self._thread = threading.Thread(
            target=self._serve, name=f"handshake-{endpoint.port}", daemon=True
        )
        self._thread.start()

    def register(self, message_id: int, topic: str, frame_bytes: bytes) -> None:
        with self._lock:
            self._pending[message_id] = (topic, frame_bytes)
            self._acks.setdefault(message_id, set())

    def resolve(self, message_id: int) -> int:
        """Drop a pending message and return how many distinct acks it got."""
        with self._lock:
            self._pending.pop(message_id, None)
            return len(self._acks.pop(message_id, set()))

    def wait_for_acks(self, message_id: int, required: int, timeout_s: float) -> int:
        deadline = time.monotonic() + timeout_s
        with self._acked:
            while True:
                have = len(self._acks.get(message_id, set()))
                if have >= required:
                    return have
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return have
                self._acked.wait(remaining)

    def pending_frames(self) -> list[bytes]:
        with self._lock:
            return [raw for _, raw in self._pending.values()]

    def _serve(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(2.0)
            reader = conn.makefile("rb")
            line = reader.readline()
            if not line:
                return
            req = json.loads(line)
            if req.get("op") != "sync":
                conn.sendall(b'{"error": "bad op"}\n')
                return
            sub_id = str(req.get("sub", ""))
            prefix = str(req.get("prefix", ""))
            with self._lock:
                offers = [
                    {"id": mid, "data": base64.b64encode(raw).decode("ascii")}
                    for mid, (topic, raw) in self._pending.items()
                    if topic.startswith(prefix) and sub_id not in self._acks.get(mid, set())
                ]
            conn.sendall(json.dumps({"frames": offers}).encode() + b"\n")
            line = reader.readline()
            if not line:
                return
            ack = json.loads(line)
            if ack.get("op") == "ack":
                with self._acked:
                    for mid in ack.get("ids", []):
                        if mid in self._acks:
                            self._acks[mid].add(sub_id)
                    self._acked.notify_all()
            conn.sendall(b'{"ok": true}\n')
        except (OSError, ValueError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def close(self) -> None:
        self._closed.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._thread.join(timeout=2.0)


class Publisher:
    """One bound endpoint, one sender thread, one bounded queue."""

    def __init__(self, endpoint: Endpoint, policy: QueuePolicy):
        self.endpoint = endpoint
        self.policy = policy
        self._lock = threading.Lock()
        self._wakeup = threading.Condition(self._lock)
        self._queue: deque[bytes] = deque()
        self._joins: deque[socket.socket] = deque()
        self._conns: list[socket.socket] = []
        self._dropped_total = 0
        self._closed = threading.Event()
        # Test seam: clearing this stalls the drain path exactly where the
        # network write would happen, without touching OS buffers.
        self._send_gate = threading.Event()
        self._send_gate.set()

        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((endpoint.host, endpoint.port))
        except OSError as exc:
            self._sock.close()
            raise TransportError(f"cannot bind {endpoint}: {exc}") from exc
        self._sock.listen(64)
        self._sock.settimeout(_ACCEPT_POLL_S)

        self._coordinator = _HandshakeCoordinator(endpoint)
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"pub-accept-{endpoint.port}", daemon=True
        )
        self._sender_thread = threading.Thread(
            target=self._send_loop, name=f"pub-send-{endpoint.port}", daemon=True
        )
        self._accept_thread.start()
        self._sender_thread.start()

    # -- queueing ------------------------------------------------------

    def publish(self, topic: str, payload: bytes) -> PublishStatus:
        frame = TopicFrame(topic=topic, payload=payload, capture_ts=time.monotonic_ns())
        return self._enqueue(encode_frame(frame))

    def publish_frame(self, frame: TopicFrame) -> PublishStatus:
        """Enqueue a pre-stamped frame byte-exactly (zero-transform forwarding)."""
        return self._enqueue(encode_frame(frame))

    def _enqueue(self, raw: bytes) -> PublishStatus:
        with self._wakeup:
            if self._closed.is_set():
                raise ClosedHandleError(f"publisher {self.endpoint} is shut down")
            dropped_now = 0
            if len(self._queue) >= self.policy.high_water_mark:
                self._queue.popleft()
                dropped_now = 1
                self._dropped_total += 1
            self._queue.append(raw)
            self._wakeup.notify()
            return PublishStatus(
                queued=len(self._queue),
                dropped_now=dropped_now,
                dropped_total=self._dropped_total,
            )

    def publish_critical(self, topic: str, payload: bytes, token: HandshakeToken) -> DeliveryReport:
        """Publish and block until ``required_acks`` subscribers confirm receipt.

        The frame goes out on the normal channel immediately; the coordinator
        keeps it on offer for sync polls until resolved, so subscribers that
        join late still receive and ack it.
        """
        if self._closed.is_set():
            raise ClosedHandleError(f"publisher {self.endpoint} is shut down")
        frame = TopicFrame(topic=topic, payload=payload, capture_ts=time.monotonic_ns())
        raw = encode_frame(frame)
        self._coordinator.register(token.message_id, topic, raw)
        start = time.monotonic()
        self._enqueue(raw)
        acks = self._coordinator.wait_for_acks(
            token.message_id, token.required_acks, token.timeout_ms / 1000.0
        )
        elapsed_ms = (time.monotonic() - start) * 1000.0
        self._coordinator.resolve(token.message_id)
        if acks < token.required_acks:
            raise HandshakeTimeout(
                f"message {token.message_id} on {topic!r}: {acks}/{token.required_acks} "
                f"acks within {token.timeout_ms} ms",
                acks=acks,
            )
        return DeliveryReport(message_id=token.message_id, acks=acks, elapsed_ms=elapsed_ms)

    # -- service threads ----------------------------------------------

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._wakeup:
                self._joins.append(conn)
                self._wakeup.notify()

    def _send_loop(self) -> None:
        """Sole owner of the outbound sockets."""
        while True:
            with self._wakeup:
                while not self._queue and not self._joins and not self._closed.is_set():
                    self._wakeup.wait(_SENDER_IDLE_S)
                if self._closed.is_set() and not self._queue:
                    break
                joins = list(self._joins)
                self._joins.clear()
                raw = self._queue.popleft() if self._queue else None
            for conn in joins:
                # Late joiners get any still-pending critical frames first.
                alive = True
                for pending in self._coordinator.pending_frames():
                    if not self._write(conn, pending):
                        alive = False
                        break
                if alive:
                    self._conns.append(conn)
            if raw is None:
                continue
            self._send_gate.wait()
            dead = [conn for conn in self._conns if not self._write(conn, raw)]
            for conn in dead:
                self._conns.remove(conn)
        for conn in self._conns:
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _write(conn: socket.socket, raw: bytes) -> bool:
        try:
            conn.sendall(raw)
            return True
        except OSError:
            try:
                conn.close()
            except OSError:
                pass
            return False

    def sink_count(self) -> int:
        """Subscriber sockets attached (including joins awaiting promotion).

        Lets a source hold off publishing until a must-not-miss-the-start
        consumer is attached, without resorting to sleeps.
        """
        with self._lock:
            return len(self._conns) + len(self._joins)

    # -- lifecycle ------------------------------------------------------

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def close(self) -> None:
        if self._closed.is_set():
            return
        with self._wakeup:
            self._closed.set()
            self._wakeup.notify_all()
        try:
            self._sock.close()
        except OSError:
            pass
        self._sender_thread.join(timeout=2.0)
        self._accept_thread.join(timeout=2.0)
        self._coordinator.close()
        _registry.forget(self)


class _Registry:
    """Process-wide singleton map: one publisher per (host, port)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._publishers: dict[tuple[str, int], Publisher] = {}
        self.created_count = 0  # stress-test observability

    def get(self, endpoint: Endpoint, policy: QueuePolicy) -> Publisher:
        key = (endpoint.host, endpoint.port)
        with self._lock:
            pub = self._publishers.get(key)
            if pub is not None and not pub.closed:
                return pub
            pub = Publisher(endpoint, policy)
            self._publishers[key] = pub
            self.created_count += 1
            return pub

    def forget(self, pub: Publisher) -> None:
        key = (pub.endpoint.host, pub.endpoint.port)
        with self._lock:
            if self._publishers.get(key) is pub:
                del self._publishers[key]

    def close_all(self) -> None:
        with self._lock:
            pubs = list(self._publishers.values())
            self._publishers.clear()
        for pub in pubs:
            pub.close()


_registry = _Registry()


def register_publisher(endpoint: Endpoint, policy: QueuePolicy | None = None) -> Publisher:
    """Return the unique publisher for this endpoint, creating it on first use.

    The first registration fixes the queue policy; later calls reuse the
    existing publisher regardless of the policy they pass.
    """
    return _registry.get(endpoint, policy or QueuePolicy())


def shutdown_all_publishers() -> None:
    _registry.close_all()

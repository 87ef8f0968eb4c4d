"""TCP subscribers: prefix-filtered frame streams with reconnect and ack polling.

A subscriber owns a dedicated receiver thread reading frames off its socket,
plus a low-rate poller on the publisher's side channel that picks up (and
acknowledges) pending critical frames, so a stream that joined late still
sees every critical message exactly once.
"""
from __future__ import annotations

import base64
import json
import queue
import socket
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass

from .frames import (
    ClosedHandleError,
    Endpoint,
    FrameAccumulator,
    TopicFrame,
    TransportError,
    decode_frame,
)

_RECV_CHUNK = 65536
_HANDSHAKE_POLL_S = 0.05


@dataclass(frozen=True)
class RetryPolicy:
    """Connection retry budget applied to each (re)connect episode."""

    interval_s: float = 0.05
    budget_s: float = 30.0


class FrameStream:
    """Consume frames whose topic starts with ``topic_prefix``, in arrival order.

    Consumable from one thread at a time. ``get`` raises TransportError once
    the retry budget is exhausted and ClosedHandleError after ``close``.
    """

    def __init__(self, endpoint: Endpoint, topic_prefix: str, retry: RetryPolicy):
        self.endpoint = endpoint
        self.topic_prefix = topic_prefix
        self.retry = retry
        self.sub_id = uuid.uuid4().hex
        self._queue: queue.Queue[TopicFrame] = queue.Queue(maxsize=100_000)
        self._closed = threading.Event()
        self._failure: Exception | None = None
        self._connected = threading.Event()
        # Frames already yielded, keyed by (topic, capture_ts); bounds memory
        # while letting critical frames arrive over either channel just once.
        self._seen: set[tuple[str, int]] = set()
        self._seen_order: deque[tuple[str, int]] = deque(maxlen=4096)
        self._seen_lock = threading.Lock()
        self._recv_thread = threading.Thread(
            target=self._recv_loop, name=f"sub-recv-{endpoint.port}", daemon=True
        )
        self._poll_thread = threading.Thread(
            target=self._handshake_loop, name=f"sub-poll-{endpoint.port}", daemon=True
        )
        self._recv_thread.start()
        self._poll_thread.start()

    # -- consuming -------------------------------------------------------

    def get(self, timeout: float | None = None) -> TopicFrame:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if self._failure is not None:
                raise TransportError(str(self._failure))
            step = 0.05
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"no frame within {timeout} s from {self.endpoint}")
                step = min(step, remaining)
            try:
                return self._queue.get(timeout=step)
            except queue.Empty:
                if self._closed.is_set() and self._queue.empty():
                    raise ClosedHandleError("stream is closed")

    def __iter__(self):
        while True:
            try:
                yield self.get()
            except (ClosedHandleError, TransportError):
                return

    def drain(self) -> list[TopicFrame]:
        """Return every frame currently buffered without blocking."""
        frames = []
        while True:
            try:
                frames.append(self._queue.get_nowait())
            except queue.Empty:
                return frames

    @property
    def connected(self) -> bool:
        return self._connected.is_set()

    def wait_connected(self, timeout: float) -> bool:
        return self._connected.wait(timeout)

    def close(self) -> None:
        self._closed.set()

    # -- receiving -------------------------------------------------------

    def _deliver(self, frame: TopicFrame) -> bool:
        """Queue a frame unless it was already seen; returns True when queued."""
        if not frame.topic.startswith(self.topic_prefix):
            return False
        key = (frame.topic, frame.capture_ts)
        with self._seen_lock:
            if key in self._seen:
                return False
            if len(self._seen_order) == self._seen_order.maxlen:
                self._seen.discard(self._seen_order[0])
            self._seen_order.append(key)
            self._seen.add(key)
        try:
            self._queue.put_nowait(frame)
        except queue.Full:
            return False
        return True

    def _connect(self) -> socket.socket | None:
        """One retry episode; None means the stream was closed meanwhile."""
        deadline = time.monotonic() + self.retry.budget_s
        while not self._closed.is_set():
            try:
                sock = socket.create_connection(
                    (self.endpoint.host, self.endpoint.port), timeout=1.0
                )
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.settimeout(0.1)
                return sock
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise TransportError(
                        f"{self.endpoint} unreachable after {self.retry.budget_s:.1f} s: {exc}"
                    ) from exc
                time.sleep(self.retry.interval_s)
        return None

    def _recv_loop(self) -> None:
        try:
            while not self._closed.is_set():
                sock = self._connect()
                if sock is None:
                    return
                self._connected.set()
                acc = FrameAccumulator()
                try:
                    while not self._closed.is_set():
                        try:
                            chunk = sock.recv(_RECV_CHUNK)
                        except socket.timeout:
                            continue
                        except OSError:
                            break  # reset mid-read; treat like EOF and retry
                        if not chunk:
                            break  # publisher went away; retry
                        for frame in acc.feed(chunk):
                            self._deliver(frame)
                finally:
                    self._connected.clear()
                    try:
                        sock.close()
                    except OSError:
                        pass
        except TransportError as exc:
            self._failure = exc

    # -- handshake polling -------------------------------------------------

    def _handshake_loop(self) -> None:
        while not self._closed.is_set() and self._failure is None:
            try:
                self._sync_once()
            except (OSError, ValueError):
                pass
            time.sleep(_HANDSHAKE_POLL_S)

    def _sync_once(self) -> None:
        with socket.create_connection(
            (self.endpoint.host, self.endpoint.handshake_port), timeout=1.0
        ) as sock:
            sock.settimeout(1.0)
            reader = sock.makefile("rb")
            request = {"op": "sync", "sub": self.sub_id, "prefix": self.topic_prefix}
            sock.sendall(json.dumps(request).encode() + b"\n")
            reply = json.loads(reader.readline() or b"{}")
            ids = []
            for offer in reply.get("frames", []):
                frame = decode_frame(base64.b64decode(offer["data"]))
                self._deliver(frame)
                ids.append(offer["id"])  # ack even when deduplicated
            sock.sendall(json.dumps({"op": "ack", "sub": self.sub_id, "ids": ids}).encode() + b"\n")
            reader.readline()


def subscribe(
    endpoint: Endpoint, topic_prefix: str = "", retry: RetryPolicy | None = None
) -> FrameStream:
    """Open a frame stream; subscribing before the publisher exists is fine."""
    return FrameStream(endpoint, topic_prefix, retry or RetryPolicy())

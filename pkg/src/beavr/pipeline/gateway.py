"""WebSocket gateway bridging a browser cockpit to the pipeline.

Inbound JSON (keypoint frames, session commands) is re-encoded onto the
detector's feed endpoint, which the detector merges byte-exact onto :9000.
Outbound, the gateway mirrors robot_state at <= 30 messages/s per robot
(latest wins) plus a ~1 Hz metrics digest. The first connection is the
operator; later ones are read-only observers (single-operator rule).

Message schema (text JSON):
    {"type": "keypoints", "hand": "right", "t": ns, "points": [[x,y,z] x 24]}
    {"type": "command", "kind": "pause"}
    {"type": "state", "robot": id, "q": [...], "pose": [x,y,z,qw,qx,qy,qz], "blocked": b}
    {"type": "metrics", "robot": id, "hz": f, "jitter_ms": f, "latency_ms": f}
"""
from __future__ import annotations

import asyncio
import json
import threading
import time
from collections import deque

import numpy as np
from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from ..geometry import KeypointFrame
from ..netcore import BULK_QUEUE, RetryPolicy, register_publisher, subscribe
from .config import ConfigError, SessionConfig
from .messages import (
    COMMAND_KINDS,
    TOPIC_BUTTON,
    TOPIC_PAUSE,
    TOPIC_STATE,
    SessionCommand,
    decode_state,
    encode_command,
    encode_keypoints,
    hand_topic,
)

_METRICS_WINDOW = 600  # states kept per robot for the rolling digest
_MIRROR_RATE_HZ = 30.0


class _StateBoard:
    """Thread-safe latest-state + rolling-sample store fed by netcore taps."""

    def __init__(self, robot_ids):
        self._lock = threading.Lock()
        self._latest = {}
        self._samples = {rid: deque(maxlen=_METRICS_WINDOW) for rid in robot_ids}

    def put(self, robot_id, wire_ts, state):
        with self._lock:
            self._latest[robot_id] = state
            self._samples[robot_id].append((wire_ts, state))

    def latest(self):
        with self._lock:
            return dict(self._latest)

    def metrics(self, robot_id):
        with self._lock:
            samples = list(self._samples[robot_id])
        if len(samples) < 2:
            return None
        ts = [s[0] for s in samples]
        elapsed = (ts[-1] - ts[0]) / 1e9
        if elapsed <= 0:
            return None
        intervals = np.diff(ts) / 1e6
        latencies = []
        last_apply = None
        for _, state in samples:
            if state.source_capture_ts > 0 and state.apply_ts != last_apply:
                latencies.append((state.apply_ts - state.source_capture_ts) / 1e6)
                last_apply = state.apply_ts
        return {
            "hz": (len(ts) - 1) / elapsed,
            "jitter_ms": float(np.std(intervals, ddof=1)) if len(intervals) > 1 else 0.0,
            "latency_ms": float(np.mean(latencies)) if latencies else 0.0,
        }


def _state_doc(state) -> str:
    return json.dumps(
        {
            "type": "state",
            "robot": state.robot_id,
            "q": [float(v) for v in state.q],
            "pose": [float(v) for v in state.position]
            + [state.orientation.w, state.orientation.x,
               state.orientation.y, state.orientation.z],
            "blocked": state.blocked,
            "seq": state.seq,
        }
    )


def _parse_keypoints(doc) -> KeypointFrame:
    hand = doc.get("hand")
    points = doc.get("points")
    t = doc.get("t", 0)
    if hand not in ("left", "right"):
        raise ValueError(f"hand must be left or right, got {hand!r}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (24, 3):
        raise ValueError(f"points must be 24x3, got shape {pts.shape}")
    return KeypointFrame(timestamp=int(t), hand=hand, points=pts)


def gateway_serve(
    config: SessionConfig,
    port: int = 8080,
    stop: threading.Event | None = None,
    ready: threading.Event | None = None,
):
    """Serve the gateway until `stop` is set. Blocks the calling thread."""
    if not config.feed_port:
        raise ConfigError("gateway requires feed_port in the session config")
    stop = stop if stop is not None else threading.Event()

    feed_pub = register_publisher(config.feed_endpoint(), BULK_QUEUE)
    board = _StateBoard([r.id for r in config.robots])
    taps = []
    tap_threads = []
    for spec in config.robots:
        stream = subscribe(
            config.state_endpoint(spec.id), TOPIC_STATE, retry=RetryPolicy(budget_s=3600.0)
        )
        taps.append(stream)

        def _tap(rid=spec.id, s=stream):
            try:
                for frame in s:
                    board.put(rid, frame.capture_ts, decode_state(frame.payload))
            except Exception:
                pass

        thread = threading.Thread(target=_tap, daemon=True, name=f"gateway-tap-{spec.id}")
        thread.start()
        tap_threads.append(thread)

    clients: set = set()
    roles: dict = {}
    lock = threading.Lock()

    def _handle_inbound(connection, raw) -> str | None:
        """Returns an error string for a reply, or None when accepted."""
        if isinstance(raw, (bytes, bytearray)):
            return "binary messages are not supported"
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            return f"invalid JSON: {exc}"
        if not isinstance(doc, dict) or "type" not in doc:
            return "message must be an object with a 'type' field"
        kind = doc["type"]
        if kind not in ("keypoints", "command"):
            return f"unknown message type {kind!r}"
        if roles.get(connection) != "operator":
            return "read-only observer: a cockpit operator is already connected"
        if kind == "keypoints":
            try:
                frame = _parse_keypoints(doc)
            except (ValueError, TypeError) as exc:
                return f"bad keypoints: {exc}"
            feed_pub.publish(hand_topic(frame.hand), encode_keypoints(frame))
            return None
        command = doc.get("kind")
        if command not in COMMAND_KINDS:
            return f"unknown command kind {command!r}"
        topic = TOPIC_BUTTON if command == "button" else TOPIC_PAUSE
        feed_pub.publish(
            topic, encode_command(SessionCommand(kind=command, timestamp=time.monotonic_ns()))
        )
        return None

    async def handler(connection):
        with lock:
            has_operator = any(role == "operator" for role in roles.values())
            roles[connection] = "observer" if has_operator else "operator"
            clients.add(connection)
        try:
            await connection.send(json.dumps({"type": "role", "role": roles[connection]}))
            async for raw in connection:
                error = _handle_inbound(connection, raw)
                if error is not None:
                    await connection.send(json.dumps({"type": "error", "error": error}))
        except ConnectionClosed:
            pass
        finally:
            with lock:
                clients.discard(connection)
                roles.pop(connection, None)

    async def broadcast(doc: str):
        with lock:
            targets = list(clients)
        for conn in targets:
            try:
                await conn.send(doc)
            except ConnectionClosed:
                pass

    async def mirror_states():
        period = 1.0 / min(_MIRROR_RATE_HZ, config.rate)
        sent_seq = {}
        while True:
            await asyncio.sleep(period)
            for rid, state in board.latest().items():
                if sent_seq.get(rid) == state.seq:
                    continue  # nothing new on this stream
                sent_seq[rid] = state.seq
                await broadcast(_state_doc(state))

    async def mirror_metrics():
        while True:
            await asyncio.sleep(1.0)
            for spec in config.robots:
                digest = board.metrics(spec.id)
                if digest is not None:
                    await broadcast(
                        json.dumps({"type": "metrics", "robot": spec.id, **digest})
                    )

    async def amain():
        async with serve(handler, "127.0.0.1", port):
            tasks = [
                asyncio.create_task(mirror_states()),
                asyncio.create_task(mirror_metrics()),
            ]
            if ready is not None:
                ready.set()
            try:
                while not stop.is_set():
                    await asyncio.sleep(0.05)
            finally:
                for task in tasks:
                    task.cancel()

    try:
        asyncio.run(amain())
    finally:
        for stream in taps:
            stream.close()
        for thread in tap_threads:
            thread.join(timeout=2.0)
        feed_pub.close()


def gateway_main(config: SessionConfig, port: int = 8080):
    """Process entry point; runs until the process is terminated."""
    gateway_serve(config, port=port)

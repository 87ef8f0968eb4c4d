"""Detector component: publishes keypoints and session commands on :9000.

Sources: a seeded scripted trajectory, a replay of a recorded keypoint log,
or an external feed (the gateway). Feed traffic is merged in byte-exact —
untransformed topics keep their payload bytes and capture stamps.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from ..netcore import (
    BULK_QUEUE,
    Endpoint,
    TopicFrame,
    register_publisher,
    subscribe,
)
from .config import SessionConfig
from .hand_template import ScriptedHand
from .messages import encode_keypoints, hand_topic
from .pacing import RateLoop


@dataclass(frozen=True)
class LoggedFrame:
    topic: str
    capture_ts: int
    payload: bytes


def load_keypoint_log(path: str | Path) -> list[LoggedFrame]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"keypoint log not found: {path}")
    frames = []
    for i, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            frames.append(
                LoggedFrame(
                    topic=doc["topic"],
                    capture_ts=int(doc["capture_ts"]),
                    payload=bytes.fromhex(doc["payload"]),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValueError(f"corrupt keypoint log {path} at line {i + 1}: {exc}") from exc
    return frames


class KeypointLogger:
    """Tees every frame on an endpoint into a JSONL log (topic, stamp, hex)."""

    def __init__(self, endpoint: Endpoint, path: str | Path):
        self._path = Path(path)
        self._file = self._path.open("w")
        self._stream = subscribe(endpoint, "")
        self._count = 0
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, name="keypoint-logger", daemon=True)
        self._thread.start()

    def _run(self):
        try:
            for frame in self._stream:
                line = json.dumps(
                    {
                        "topic": frame.topic,
                        "capture_ts": frame.capture_ts,
                        "payload": frame.payload.hex(),
                    }
                )
                with self._lock:
                    if self._file.closed:
                        return
                    self._file.write(line + "\n")
                    self._count += 1
        except Exception:
            pass  # stream closed under us during shutdown

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def close(self):
        self._stream.close()
        self._thread.join(timeout=2.0)
        with self._lock:
            if not self._file.closed:
                self._file.flush()
                self._file.close()


def detector_run(config: SessionConfig, stop: threading.Event | None = None):
    """Run the detector until `stop` is set (or forever in a worker process)."""
    stop = stop or threading.Event()
    publisher = register_publisher(config.detector_endpoint(), BULK_QUEUE)

    forward_stream = None
    forward_thread = None
    if config.feed_port:
        forward_stream = subscribe(config.feed_endpoint(), "")

        def _forward():
            try:
                for frame in forward_stream:
                    publisher.publish_frame(
                        TopicFrame(
                            topic=frame.topic,
                            payload=frame.payload,
                            capture_ts=frame.capture_ts,
                        )
                    )
            except Exception:
                pass

        forward_thread = threading.Thread(target=_forward, name="detector-feed", daemon=True)
        forward_thread.start()

    try:
        if config.source == "scripted":
            hands = {
                side: ScriptedHand(seed=config.seed, hand=side, rate_hz=config.rate)
                for side in config.sides()
            }
            loop = RateLoop(config.rate)
            i = 0
            while not stop.is_set():
                loop.wait()
                for side, scripted in hands.items():
                    frame = scripted.frame(i)
                    publisher.publish(hand_topic(side), encode_keypoints(frame))
                i += 1
        elif config.source == "replay":
            frames = load_keypoint_log(config.replay_log)
            loop = RateLoop(config.rate)
            for logged in frames:
                if stop.is_set():
                    break
                loop.wait()
                publisher.publish(logged.topic, logged.payload)
            stop.wait()
        else:  # feed: forwarding thread does all the work
            stop.wait()
    finally:
        if forward_stream is not None:
            forward_stream.close()
        if forward_thread is not None:
            forward_thread.join(timeout=2.0)
        publisher.close()


def detector_main(config: SessionConfig):
    """Process entry point; runs until the process is terminated."""
    detector_run(config)

"""Topic-framed wire protocol: the unit of transport for every channel.

Frame layout, all little-endian, in order:

    version      1 byte   (currently 1)
    topic_len    2 bytes
    topic        topic_len bytes (UTF-8)
    capture_ts   8 bytes  (monotonic nanoseconds, per-host epoch)
    payload_len  4 bytes
    payload      payload_len bytes

``decode_frame(encode_frame(f)) == f`` for every valid frame.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1
MAX_TOPIC_BYTES = 255
MAX_PAYLOAD_BYTES = 16 * 1024 * 1024

_HEAD = struct.Struct("<BH")       # version, topic_len
_TAIL = struct.Struct("<QI")       # capture_ts, payload_len


class NetError(Exception):
    """Base class for transport-layer failures."""


class FrameError(NetError):
    """Frame violates the wire contract (bad topic, oversized payload, truncation)."""


class TransportError(NetError):
    """Socket-level failure: bind refused, peer unreachable after retries."""


class ClosedHandleError(NetError):
    """Operation on a publisher or stream that has been shut down."""


class HandshakeTimeout(NetError):
    """publish_critical expired before collecting the required acknowledgements."""

    def __init__(self, message: str, acks: int):
        super().__init__(message)
        self.acks = acks


@dataclass(frozen=True)
class TopicFrame:
    topic: str
    payload: bytes = b""
    capture_ts: int = 0
    version: int = PROTOCOL_VERSION

    def validate(self) -> None:
        if self.version != PROTOCOL_VERSION:
            raise FrameError(f"unsupported protocol version {self.version}")
        if not self.topic:
            raise FrameError("topic must be non-empty")
        if len(self.topic.encode("utf-8")) > MAX_TOPIC_BYTES:
            raise FrameError(f"topic exceeds {MAX_TOPIC_BYTES} bytes")
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise FrameError(f"payload exceeds {MAX_PAYLOAD_BYTES} bytes")
        if self.capture_ts < 0:
            raise FrameError("capture_ts must be non-negative")


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int

    def __post_init__(self):
        if not 1024 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside [1024, 65535]")

    @property
    def handshake_port(self) -> int:
        """Ack side channel lives one port above the data channel."""
        return self.port + 1

    def __str__(self) -> str:
        return f"tcp://{self.host}:{self.port}"


@dataclass(frozen=True)
class QueuePolicy:
    """Per-publisher send queue bound; overflow always discards the oldest frame."""

    high_water_mark: int = 1000

    def __post_init__(self):
        if self.high_water_mark < 1:
            raise ValueError("high_water_mark must be >= 1")


# Freshest-wins bound for teleoperation command topics; stale commands are
# worse than dropped ones.
CONTROL_QUEUE = QueuePolicy(high_water_mark=2)
BULK_QUEUE = QueuePolicy(high_water_mark=1000)


@dataclass(frozen=True)
class HandshakeToken:
    message_id: int
    required_acks: int = 1
    timeout_ms: int = 1000

    def __post_init__(self):
        if self.required_acks < 1:
            raise ValueError("required_acks must be >= 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout must be >= 1 ms")


@dataclass
class DeliveryReport:
    message_id: int
    acks: int
    elapsed_ms: float
    confirmed: bool = field(default=True)


def encode_frame(frame: TopicFrame) -> bytes:
    frame.validate()
    topic = frame.topic.encode("utf-8")
    return b"".join(
        (
            _HEAD.pack(frame.version, len(topic)),
            topic,
            _TAIL.pack(frame.capture_ts, len(frame.payload)),
            frame.payload,
        )
    )


def decode_frame(data: bytes) -> TopicFrame:
    frame, consumed = decode_frame_from(data)
    if consumed != len(data):
        raise FrameError(f"{len(data) - consumed} trailing bytes after frame")
    return frame


def decode_frame_from(data: bytes, offset: int = 0) -> tuple[TopicFrame, int]:
    """Decode one frame starting at ``offset``; returns (frame, next offset)."""
    if len(data) - offset < _HEAD.size:
        raise FrameError("truncated frame header")
    version, topic_len = _HEAD.unpack_from(data, offset)
    pos = offset + _HEAD.size
    if len(data) - pos < topic_len + _TAIL.size:
        raise FrameError("truncated topic or timestamp")
    topic = bytes(data[pos : pos + topic_len]).decode("utf-8")
    pos += topic_len
    capture_ts, payload_len = _TAIL.unpack_from(data, pos)
    pos += _TAIL.size
    if payload_len > MAX_PAYLOAD_BYTES:
        raise FrameError(f"payload length {payload_len} exceeds limit")
    if len(data) - pos < payload_len:
        raise FrameError("truncated payload")
    payload = bytes(data[pos : pos + payload_len])
    pos += payload_len
    frame = TopicFrame(topic=topic, payload=payload, capture_ts=capture_ts, version=version)
    frame.validate()
    return frame, pos


def read_frame(recv_exact) -> TopicFrame:
    """Read one frame from a stream via ``recv_exact(n) -> bytes``."""
    head = recv_exact(_HEAD.size)
    version, topic_len = _HEAD.unpack(head)
    topic = recv_exact(topic_len).decode("utf-8")
    capture_ts, payload_len = _TAIL.unpack(recv_exact(_TAIL.size))
    if payload_len > MAX_PAYLOAD_BYTES:
        raise FrameError(f"payload length {payload_len} exceeds limit")
    payload = recv_exact(payload_len)
    frame = TopicFrame(topic=topic, payload=payload, capture_ts=capture_ts, version=version)
    frame.validate()
    return frame


class FrameAccumulator:
    """Incremental decoder over a byte stream (socket receive buffers)."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[TopicFrame]:
        self._buf.extend(data)
        frames: list[TopicFrame] = []
        while True:
            frame = self._try_parse()
            if frame is None:
                return frames
            frames.append(frame)

    def _try_parse(self) -> TopicFrame | None:
        buf = self._buf
        if len(buf) < _HEAD.size:
            return None
        _, topic_len = _HEAD.unpack_from(buf, 0)
        body_at = _HEAD.size + topic_len
        if len(buf) < body_at + _TAIL.size:
            return None
        _, payload_len = _TAIL.unpack_from(buf, body_at)
        if payload_len > MAX_PAYLOAD_BYTES:
            raise FrameError(f"payload length {payload_len} exceeds limit")
        total = body_at + _TAIL.size + payload_len
        if len(buf) < total:
            return None
        frame, consumed = decode_frame_from(bytes(buf[:total]))
        assert consumed == total
        del buf[:total]
        return frame

"""Topic-framed pub/sub over plain TCP with delivery handshakes.

Publishers are singletons per (host, port) with bounded drop-oldest send
queues; subscribers are prefix-filtered streams with reconnect. A request-
reply side channel on ``port + 1`` carries acknowledgements for critical
messages so slow joiners never miss them.
"""
from .frames import (
    BULK_QUEUE,
    CONTROL_QUEUE,
    ClosedHandleError,
    DeliveryReport,
    Endpoint,
    FrameAccumulator,
    FrameError,
    HandshakeTimeout,
    HandshakeToken,
    MAX_PAYLOAD_BYTES,
    MAX_TOPIC_BYTES,
    NetError,
    PROTOCOL_VERSION,
    QueuePolicy,
    TopicFrame,
    TransportError,
    decode_frame,
    decode_frame_from,
    encode_frame,
    read_frame,
)
from .publisher import (
    Publisher,
    PublishStatus,
    register_publisher,
    shutdown_all_publishers,
)
from .subscriber import FrameStream, RetryPolicy, subscribe

__all__ = [
    "BULK_QUEUE",
    "CONTROL_QUEUE",
    "ClosedHandleError",
    "DeliveryReport",
    "Endpoint",
    "FrameAccumulator",
    "FrameError",
    "FrameStream",
    "HandshakeTimeout",
    "HandshakeToken",
    "MAX_PAYLOAD_BYTES",
    "MAX_TOPIC_BYTES",
    "NetError",
    "PROTOCOL_VERSION",
    "Publisher",
    "PublishStatus",
    "QueuePolicy",
    "RetryPolicy",
    "TopicFrame",
    "TransportError",
    "decode_frame",
    "decode_frame_from",
    "encode_frame",
    "read_frame",
    "register_publisher",
    "shutdown_all_publishers",
    "subscribe",
]

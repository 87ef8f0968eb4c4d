"""Desk-scale VR-style teleoperation stack.

Layers, bottom to top:

- ``netcore``: topic-framed TCP pub/sub with bounded queues and a delivery
  handshake for critical messages.
- ``geometry``: keypoint frames, transforms, quaternions, hand retargeting.
- ``kinematics`` / ``ik``: YAML chain models, FK/Jacobians, damped
  least-squares IK with capsule self-collision checks.
- ``filters``: moving average, slerp, complementary pose smoothing.
- ``pipeline``: detector → operator → interface components, session
  supervision, think–act policy loop, WebSocket gateway.
- ``recorder``: episode dataset writer/reader with delta-timestamp queries.
- ``bench``: rate/jitter/latency measurement over live sessions.
"""

__version__ = "0.1.0"

from . import bench, filters, geometry, ik, kinematics, netcore, pipeline, recorder

__all__ = [
    "bench",
    "filters",
    "geometry",
    "ik",
    "kinematics",
    "netcore",
    "pipeline",
    "recorder",
    "__version__",
]

"""Wire payload codecs for pipeline topics.

All payloads are little-endian struct packs so replay and forwarding can be
byte-exact. Hand IK targets travel as 8 ordered points; the marker binding
(thumb/index/middle/ring x distal/tip) is a fixed convention on both ends.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..geometry import FINGERTIP_LANDMARKS, KeypointFrame, Quaternion
from ..ik import IkTarget

TOPIC_RIGHT = "right"
TOPIC_LEFT = "left"
TOPIC_BUTTON = "button"
TOPIC_PAUSE = "pause"
TOPIC_COMMAND = "endeff_coords"
TOPIC_STATE = "robot_state"

COMMAND_KINDS = ("pause", "resume", "button", "stop")
HAND_TARGET_MARKERS = tuple(
    f"{finger}_{part}" for finger in FINGERTIP_LANDMARKS for part in ("distal", "tip")
)

_KEYPOINT_HEAD = struct.Struct("<Bq")
_COMMAND_HEAD = struct.Struct("<Bq")
_EE_HEAD = struct.Struct("<BQq")
_STATE_HEAD = struct.Struct("<BHQqq")


def transformed_topic(side: str) -> str:
    return f"TRANSFORMED_{side}"


def hand_topic(side: str) -> str:
    return TOPIC_RIGHT if side == "right" else TOPIC_LEFT


class PayloadError(ValueError):
    pass


# -- keypoints ---------------------------------------------------------------


def encode_keypoints(frame: KeypointFrame) -> bytes:
    flag = 0 if frame.hand == "right" else 1
    return _KEYPOINT_HEAD.pack(flag, frame.timestamp) + np.ascontiguousarray(
        frame.points, dtype="<f8"
    ).tobytes()


def decode_keypoints(payload: bytes) -> KeypointFrame:
    if len(payload) != _KEYPOINT_HEAD.size + 24 * 3 * 8:
        raise PayloadError(f"keypoint payload has {len(payload)} bytes")
    flag, timestamp = _KEYPOINT_HEAD.unpack_from(payload)
    points = np.frombuffer(payload, dtype="<f8", offset=_KEYPOINT_HEAD.size).reshape(24, 3)
    return KeypointFrame(
        timestamp=timestamp, hand="right" if flag == 0 else "left", points=points.copy()
    )


# -- session commands --------------------------------------------------------


@dataclass(frozen=True)
class SessionCommand:
    kind: str
    timestamp: int = 0

    def __post_init__(self):
        if self.kind not in COMMAND_KINDS:
            raise PayloadError(f"unknown command kind {self.kind!r}")


def encode_command(cmd: SessionCommand) -> bytes:
    return _COMMAND_HEAD.pack(COMMAND_KINDS.index(cmd.kind), cmd.timestamp)


def decode_command(payload: bytes) -> SessionCommand:
    if len(payload) != _COMMAND_HEAD.size:
        raise PayloadError(f"command payload has {len(payload)} bytes")
    code, timestamp = _COMMAND_HEAD.unpack(payload)
    if code >= len(COMMAND_KINDS):
        raise PayloadError(f"unknown command code {code}")
    return SessionCommand(kind=COMMAND_KINDS[code], timestamp=timestamp)


# -- end-effector commands ----------------------------------------------------


@dataclass(frozen=True)
class EndEffectorCommand:
    """Operator or policy output: arm pose, eight hand points, or raw joints."""

    robot_id: str
    kind: str  # arm | hand | joint
    seq: int
    capture_ts: int
    position: np.ndarray | None = None
    orientation: Quaternion | None = None
    hand_points: np.ndarray | None = None  # (8, 3), HAND_TARGET_MARKERS order
    q: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("arm", "hand", "joint"):
            raise PayloadError(f"unknown command kind {self.kind!r}")
        if self.seq < 0:
            raise PayloadError("seq must be non-negative")
        if self.kind == "arm":
            if self.position is None or self.orientation is None:
                raise PayloadError("arm command requires position and orientation")
            object.__setattr__(
                self, "position", np.asarray(self.position, dtype=np.float64).reshape(3)
            )
        elif self.kind == "hand":
            pts = np.asarray(self.hand_points, dtype=np.float64)
            if pts.shape != (8, 3):
                raise PayloadError(f"hand command requires (8, 3) points, got {pts.shape}")
            object.__setattr__(self, "hand_points", pts)
        else:
            if self.q is None:
                raise PayloadError("joint command requires q")
            object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64).reshape(-1))

    def ik_targets(self) -> list[IkTarget]:
        if self.kind != "hand":
            raise PayloadError("only hand commands carry IK targets")
        return [
            IkTarget(marker=marker, desired=self.hand_points[i])
            for i, marker in enumerate(HAND_TARGET_MARKERS)
        ]


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 255:
        raise PayloadError("string field too long")
    return bytes([len(raw)]) + raw


def _unpack_str(payload: bytes, offset: int) -> tuple[str, int]:
    n = payload[offset]
    end = offset + 1 + n
    return payload[offset + 1 : end].decode("utf-8"), end


_KIND_CODES = {"arm": 0, "hand": 1, "joint": 2}


def encode_endeff(cmd: EndEffectorCommand) -> bytes:
    head = _EE_HEAD.pack(_KIND_CODES[cmd.kind], cmd.seq, cmd.capture_ts)
    body = _pack_str(cmd.robot_id)
    if cmd.kind == "arm":
        body += struct.pack(
            "<7d",
            *cmd.position,
            cmd.orientation.w,
            cmd.orientation.x,
            cmd.orientation.y,
            cmd.orientation.z,
        )
    elif cmd.kind == "hand":
        body += np.ascontiguousarray(cmd.hand_points, dtype="<f8").tobytes()
    else:
        body += struct.pack("<H", cmd.q.size) + cmd.q.astype("<f8").tobytes()
    return head + body


def decode_endeff(payload: bytes) -> EndEffectorCommand:
    try:
        kind_code, seq, capture_ts = _EE_HEAD.unpack_from(payload)
        if kind_code not in _KIND_CODES.values():
            raise PayloadError(f"unknown command kind code {kind_code}")
        robot_id, offset = _unpack_str(payload, _EE_HEAD.size)
        if kind_code == 0:
            values = struct.unpack_from("<7d", payload, offset)
            return EndEffectorCommand(
                robot_id=robot_id,
                kind="arm",
                seq=seq,
                capture_ts=capture_ts,
                position=np.array(values[:3]),
                orientation=Quaternion(*values[3:]),
            )
        if kind_code == 1:
            points = np.frombuffer(payload, dtype="<f8", offset=offset).reshape(8, 3)
            return EndEffectorCommand(
                robot_id=robot_id, kind="hand", seq=seq, capture_ts=capture_ts,
                hand_points=points.copy(),
            )
        (nq,) = struct.unpack_from("<H", payload, offset)
        if len(payload) != offset + 2 + nq * 8:
            raise PayloadError(f"joint command payload has {len(payload)} bytes")
        q = np.frombuffer(payload, dtype="<f8", offset=offset + 2, count=nq).copy()
        return EndEffectorCommand(
            robot_id=robot_id, kind="joint", seq=seq, capture_ts=capture_ts, q=q
        )
    except PayloadError:
        raise
    except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
        raise PayloadError(f"malformed end-effector payload: {exc}") from exc


# -- robot state ---------------------------------------------------------------


@dataclass(frozen=True)
class RobotState:
    robot_id: str
    q: np.ndarray
    position: np.ndarray
    orientation: Quaternion
    blocked: bool
    seq: int
    apply_ts: int
    source_capture_ts: int

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64).reshape(-1))
        object.__setattr__(
            self, "position", np.asarray(self.position, dtype=np.float64).reshape(3)
        )


def encode_state(state: RobotState) -> bytes:
    head = _STATE_HEAD.pack(
        1 if state.blocked else 0,
        state.q.size,
        state.seq,
        state.apply_ts,
        state.source_capture_ts,
    )
    pose = struct.pack(
        "<7d",
        *state.position,
        state.orientation.w,
        state.orientation.x,
        state.orientation.y,
        state.orientation.z,
    )
    return head + _pack_str(state.robot_id) + state.q.astype("<f8").tobytes() + pose


def decode_state(payload: bytes) -> RobotState:
    try:
        blocked, nq, seq, apply_ts, source_ts = _STATE_HEAD.unpack_from(payload)
        robot_id, offset = _unpack_str(payload, _STATE_HEAD.size)
        if len(payload) != offset + nq * 8 + 7 * 8:
            raise PayloadError(f"state payload has {len(payload)} bytes")
        q = np.frombuffer(payload, dtype="<f8", offset=offset, count=nq).copy()
        pose = struct.unpack_from("<7d", payload, offset + nq * 8)
    except PayloadError:
        raise
    except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
        raise PayloadError(f"malformed state payload: {exc}") from exc
    return RobotState(
        robot_id=robot_id,
        q=q,
        position=np.array(pose[:3]),
        orientation=Quaternion(*pose[3:]),
        blocked=bool(blocked),
        seq=seq,
        apply_ts=apply_ts,
        source_capture_ts=source_ts,
    )

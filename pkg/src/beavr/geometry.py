"""Coordinate math for hand-to-robot retargeting.

Covers the whole transform chain: wrist-relative keypoints, Gram-Schmidt
hand bases, the Y-up-to-Z-up fingertip conversion with per-finger scaling,
and composition of relative hand motion onto a robot initial pose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NUM_KEYPOINTS = 24
ORTHONORMAL_TOL = 1e-9
UNIT_QUAT_TOL = 1e-9
MAX_COORD_M = 10.0

# 24-slot landmark layout: wrist, palm, then per-finger blocks. Thumb has no
# intermediate joint; pinky is compressed to proximal/distal/tip.
WRIST = 0
PALM = 1
THUMB = slice(2, 6)     # metacarpal, proximal, distal, tip
INDEX = slice(6, 11)    # metacarpal, proximal, intermediate, distal, tip
MIDDLE = slice(11, 16)
RING = slice(16, 21)
PINKY = slice(21, 24)   # proximal, distal, tip

THUMB_DISTAL, THUMB_TIP = 4, 5
INDEX_PROXIMAL, INDEX_DISTAL, INDEX_TIP = 7, 9, 10
MIDDLE_PROXIMAL, MIDDLE_DISTAL, MIDDLE_TIP = 12, 14, 15
RING_DISTAL, RING_TIP = 19, 20
PINKY_PROXIMAL = 21

FINGERTIP_LANDMARKS = {
    "thumb": (THUMB_DISTAL, THUMB_TIP),
    "index": (INDEX_DISTAL, INDEX_TIP),
    "middle": (MIDDLE_DISTAL, MIDDLE_TIP),
    "ring": (RING_DISTAL, RING_TIP),
}


class DegenerateBasisError(ValueError):
    """Basis landmarks are too close to collinear; caller should hold the last valid basis."""


@dataclass(frozen=True)
class KeypointFrame:
    """One timestamped 24-landmark hand sample (meters, Y-up input frame)."""

    timestamp: int
    hand: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_KEYPOINTS, 3):
            raise ValueError(f"expected {NUM_KEYPOINTS}x3 points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("keypoints contain non-finite values")
        if np.abs(pts).max() > MAX_COORD_M:
            raise ValueError(f"keypoint coordinate beyond {MAX_COORD_M} m")
        if self.hand not in ("left", "right"):
            raise ValueError(f"hand must be left or right, got {self.hand!r}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class HomogeneousTransform:
    """Rigid transform: proper orthonormal rotation plus translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > 1e-7:
            raise ValueError(f"rotation not orthonormal (deviation {err:.2e})")
        if np.linalg.det(rot) < 0:
            raise ValueError("rotation has negative determinant (reflection)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "HomogeneousTransform":
        return cls()

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "HomogeneousTransform":
        mat = np.asarray(mat, dtype=np.float64)
        return cls(rotation=mat[:3, :3], translation=mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def inverse(self) -> "HomogeneousTransform":
        rt = self.rotation.T
        return HomogeneousTransform(rotation=rt, translation=-rt @ self.translation)

    def __matmul__(self, other: "HomogeneousTransform") -> "HomogeneousTransform":
        return HomogeneousTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=np.float64) + self.translation


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar-first."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} is not 1")

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_parts(cls, w: float, xyz: np.ndarray) -> "Quaternion":
        norm = math.sqrt(w * w + float(np.dot(xyz, xyz)))
        return cls(w / norm, xyz[0] / norm, xyz[1] / norm, xyz[2] / norm)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def canonical(self) -> "Quaternion":
        """Flip sign so w >= 0; same rotation."""
        if self.w < 0:
            return Quaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        arr = np.array(
            [
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ]
        )
        arr /= np.linalg.norm(arr)
        return Quaternion(*arr)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    @classmethod
    def from_matrix(cls, rot: np.ndarray) -> "Quaternion":
        """Shepperd's method: branch on the largest diagonal combination."""
        rot = np.asarray(rot, dtype=np.float64)
        m00, m01, m02 = rot[0]
        m10, m11, m12 = rot[1]
        m20, m21, m22 = rot[2]
        trace = m00 + m11 + m22
        if trace > 0:
            s = math.sqrt(trace + 1.0) * 2
            q = (0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
        elif m00 > m11 and m00 > m22:
            s = math.sqrt(1.0 + m00 - m11 - m22) * 2
            q = ((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
        elif m11 > m22:
            s = math.sqrt(1.0 + m11 - m00 - m22) * 2
            q = ((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
        else:
            s = math.sqrt(1.0 + m22 - m00 - m11) * 2
            q = ((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
        arr = np.array(q)
        arr /= np.linalg.norm(arr)
        return cls(*arr).canonical()


@dataclass(frozen=True)
class ScaleProfile:
    """Per-finger robot-to-human scaling for fingertip retargeting."""

    thumb: float = 1.7
    index: float = 1.8
    middle: float = 1.8
    ring: float = 1.8

    def __post_init__(self):
        for name in ("thumb", "index", "middle", "ring"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} scale must be positive")

    def for_finger(self, finger: str) -> float:
        return float(getattr(self, finger))


# -- rotation helpers ---------------------------------------------------


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation by `angle` about `axis` (normalized internally)."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    axis = axis / norm
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic x-y-z rotation: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return (
        rotation_about_axis(np.array([0.0, 0.0, 1.0]), yaw)
        @ rotation_about_axis(np.array([0.0, 1.0, 0.0]), pitch)
        @ rotation_about_axis(np.array([1.0, 0.0, 0.0]), roll)
    )


def rotation_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (angle * unit axis)."""
    axis = np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    sin_angle = float(np.linalg.norm(axis)) / 2.0
    cos_angle = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    # atan2 stays well-conditioned at both ends where acos(trace) loses
    # ~sqrt(eps) of accuracy.
    angle = math.atan2(sin_angle, cos_angle)
    if angle < 1e-10:
        return np.zeros(3)
    if cos_angle < 0.0 and sin_angle < 1e-6:
        # Near pi: recover the axis from the symmetric part.
        diag = np.clip((np.diag(rot) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(diag)
        axis[1] = math.copysign(axis[1], rot[0, 1])
        axis[2] = math.copysign(axis[2], rot[0, 2])
        norm = np.linalg.norm(axis)
        return angle * axis / norm
    return angle * axis / (2.0 * sin_angle)


# -- retargeting operations ---------------------------------------------


def wrist_relative(frame: KeypointFrame) -> KeypointFrame:
    """Translate every landmark so the wrist sits at the origin."""
    return KeypointFrame(
        timestamp=frame.timestamp,
        hand=frame.hand,
        points=frame.points - frame.points[WRIST],
    )


def hand_basis(frame: KeypointFrame, min_angle_deg: float = 1.0) -> HomogeneousTransform:
    """Orthonormal hand frame from index/middle/pinky proximal landmarks.

    Column 1 follows the middle proximal direction, column 2 the index-to-
    pinky lateral direction orthogonalized against it, column 3 their cross
    product (the palm normal). Landmarks are taken wrist-relative, so raw and
    wrist-relative frames give the same rotation; translation is the frame's
    wrist position.
    """
    wrist = frame.points[WRIST]
    forward = frame.points[MIDDLE_PROXIMAL] - wrist
    lateral = frame.points[INDEX_PROXIMAL] - frame.points[PINKY_PROXIMAL]

    forward_norm = np.linalg.norm(forward)
    lateral_norm = np.linalg.norm(lateral)
    if forward_norm < 1e-9 or lateral_norm < 1e-9:
        raise DegenerateBasisError("zero-length basis landmark vector")

    b1 = forward / forward_norm
    residual = lateral - (lateral @ b1) * b1
    # Collinearity gate: the lateral direction must stand off b1 by the
    # minimum angle or the palm normal flips unpredictably.
    if np.linalg.norm(residual) < lateral_norm * math.sin(math.radians(min_angle_deg)):
        raise DegenerateBasisError("index/middle/pinky landmarks are near-collinear")
    b2 = residual / np.linalg.norm(residual)
    b3 = np.cross(b1, b2)
    return HomogeneousTransform(rotation=np.column_stack([b1, b2, b3]), translation=wrist)


def vr_to_robot(p: np.ndarray, s_f: float) -> np.ndarray:
    """Y-up input point to Z-up robot point, scaled by the finger factor.

    Two steps: axis reflection p' = [-px, -pz, py], then the swap-and-scale
    p'' = [p'y*s, -p'x*s, p'z*s]. Norm scales by exactly s_f.
    """
    if s_f <= 0:
        raise ValueError("scale factor must be positive")
    p = np.asarray(p, dtype=np.float64)
    p1 = np.array([-p[0], -p[2], p[1]])
    return np.array([p1[1] * s_f, -p1[0] * s_f, p1[2] * s_f])


def compose_target(
    h_ri_rh: HomogeneousTransform,
    h_r_v: HomogeneousTransform,
    h_ht_hi: HomogeneousTransform,
) -> HomogeneousTransform:
    """Map relative hand motion into the robot frame on top of the initial pose.

    Returns robot_initial @ (frame_conv^-1 @ hand_motion @ frame_conv).
    """
    return h_ri_rh @ (h_r_v.inverse() @ h_ht_hi @ h_r_v)


def transform_to_pose(h: HomogeneousTransform) -> tuple[np.ndarray, Quaternion]:
    """Split a transform into (position, canonical unit quaternion)."""
    return h.translation.copy(), Quaternion.from_matrix(h.rotation)


def pose_to_transform(position: np.ndarray, orientation: Quaternion) -> HomogeneousTransform:
    return HomogeneousTransform(rotation=orientation.to_matrix(), translation=position)

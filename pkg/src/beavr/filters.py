"""Temporal smoothing: windowed means for keypoints, SLERP blending for poses.

Filter objects are single-owner mutable state; create one per stream.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from .geometry import Quaternion


class MovingAverageFilter:
    """Arithmetic mean over the last `window` samples; warms up over fewer."""

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._buffer: deque[np.ndarray] = deque(maxlen=window)
        self._shape: tuple | None = None

    def step(self, sample: np.ndarray) -> np.ndarray:
        sample = np.asarray(sample, dtype=np.float64)
        if self._shape is None:
            self._shape = sample.shape
        elif sample.shape != self._shape:
            raise ValueError(f"sample shape {sample.shape} != expected {self._shape}")
        self._buffer.append(sample)
        return np.mean(self._buffer, axis=0)

    def reset(self):
        self._buffer.clear()
        self._shape = None


def slerp(q0: Quaternion, q1: Quaternion, t: float) -> Quaternion:
    """Spherical interpolation along the shorter arc; nlerp below 1e-6 rad."""
    a0 = q0.as_array()
    a1 = q1.as_array()
    dot = float(a0 @ a1)
    if dot < 0.0:
        a1 = -a1
        dot = -dot
    dot = min(dot, 1.0)
    angle = 2.0 * math.acos(dot) if dot < 1.0 else 0.0
    half = angle / 2.0
    if angle < 1e-6:
        out = (1.0 - t) * a0 + t * a1
    else:
        sin_half = math.sin(half)
        out = (
            math.sin((1.0 - t) * half) / sin_half * a0
            + math.sin(t * half) / sin_half * a1
        )
    out /= np.linalg.norm(out)
    return Quaternion(*out)


class ComplementaryFilter:
    """First-order blend toward each measurement; orientation via SLERP.

    position <- (1-alpha)*filtered + alpha*measured
    orientation <- slerp(filtered, measured, alpha)
    """

    def __init__(
        self,
        alpha: float = 0.35,
        position: np.ndarray | None = None,
        orientation: Quaternion | None = None,
    ):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.alpha = alpha
        self.position = (
            np.zeros(3) if position is None else np.asarray(position, dtype=np.float64).copy()
        )
        self.orientation = Quaternion.identity() if orientation is None else orientation

    def step(
        self, measured_position: np.ndarray, measured_orientation: Quaternion
    ) -> tuple[np.ndarray, Quaternion]:
        measured_position = np.asarray(measured_position, dtype=np.float64)
        self.position = (1.0 - self.alpha) * self.position + self.alpha * measured_position
        self.orientation = slerp(self.orientation, measured_orientation, self.alpha)
        return self.position.copy(), self.orientation

    def reset(self, position: np.ndarray, orientation: Quaternion):
        self.position = np.asarray(position, dtype=np.float64).copy()
        self.orientation = orientation

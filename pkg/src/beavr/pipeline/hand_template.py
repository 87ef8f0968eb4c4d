"""Parametric 24-landmark hand template and the scripted trajectory source.

The template is a kinematic stick hand in the Y-up input frame: wrist at the
origin, fingers pointing -z, palm facing -y. Each finger is a polyline whose
flexion is driven by one curl scalar in [0, 1] mapping to [60, 80, 40] degrees
at the proximal/intermediate/distal joints. The scripted source sweeps the
wrist along a seeded Lissajous path with a gentle wrist tilt while the
fingers curl periodically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import NUM_KEYPOINTS, PALM, WRIST, KeypointFrame, rotation_about_axis

CURL_DEGREES = (60.0, 80.0, 40.0)

# (first landmark slot, lateral offset factor, base z, segment lengths).
# Thumb has 4 landmarks (no intermediate), pinky 3 (proximal/distal/tip).
_FINGER_SPECS = {
    "thumb": (2, 1.6, -0.020, (0.040, 0.032, 0.027)),
    "index": (6, 1.0, -0.040, (0.055, 0.035, 0.025, 0.023)),
    "middle": (11, 0.0, -0.042, (0.060, 0.040, 0.028, 0.025)),
    "ring": (16, -1.0, -0.040, (0.055, 0.037, 0.026, 0.024)),
    "pinky": (21, -1.8, -0.038, (0.045, 0.028)),
}
_LATERAL_UNIT = 0.021  # meters per lateral offset factor


def template_keypoints(curls: dict[str, float] | None = None, hand: str = "right") -> np.ndarray:
    """24x3 landmark array for the given per-finger curls (default all open)."""
    curls = curls or {}
    # Right hand palm-down: thumb sits on -x; mirror for the left hand.
    sx = -1.0 if hand == "right" else 1.0
    points = np.zeros((NUM_KEYPOINTS, 3))
    points[WRIST] = (0.0, 0.0, 0.0)
    points[PALM] = (0.0, 0.0, -0.05)
    for finger, (slot, lateral, base_z, segments) in _FINGER_SPECS.items():
        curl = min(max(float(curls.get(finger, 0.0)), 0.0), 1.0)
        base = np.array([sx * lateral * _LATERAL_UNIT, 0.0, base_z])
        points[slot] = base
        # Flexion bends about +x through the palm (-y); the metacarpal
        # segment stays rigid, later segments accumulate the curl angles.
        position = base
        bend = 0.0
        for seg_i, length in enumerate(segments):
            if seg_i >= 1:
                joint_angle = CURL_DEGREES[min(seg_i - 1, len(CURL_DEGREES) - 1)]
                bend += math.radians(joint_angle) * curl
            direction = rotation_about_axis(np.array([1.0, 0.0, 0.0]), -bend) @ np.array(
                [0.0, 0.0, -1.0]
            )
            position = position + length * direction
            points[slot + seg_i + 1] = position
    return points


@dataclass
class ScriptedHand:
    """Deterministic smooth hand trajectory: frame(i) is a pure function of
    (seed, hand, rate); repeated runs with one seed are identical."""

    seed: int = 7
    hand: str = "right"
    rate_hz: float = 30.0
    amplitude: float = 0.06
    _params: dict = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed + (0 if self.hand == "right" else 1000))
        self._params = {
            "freqs": 0.15 + 0.25 * rng.random(3),
            "phases": 2 * math.pi * rng.random(3),
            "curl_freqs": 0.3 + 0.3 * rng.random(5),
            "curl_phases": 2 * math.pi * rng.random(5),
            "tilt_freq": 0.1 + 0.1 * rng.random(),
        }
        self._fingers = list(_FINGER_SPECS)

    def frame(self, index: int) -> KeypointFrame:
        t = index / self.rate_hz
        p = self._params
        curls = {
            finger: 0.5 + 0.5 * math.sin(2 * math.pi * p["curl_freqs"][i] * t + p["curl_phases"][i])
            for i, finger in enumerate(self._fingers)
        }
        points = template_keypoints(curls, self.hand)
        # Wrist tilt (flexion/extension about the lateral axis). A tilt keeps
        # every wrist-relative landmark in its own sagittal plane, so finger
        # retargeting stays well-conditioned; a wrist *yaw* would instead fan
        # the mapped fingertip targets sideways across neighbouring fingers.
        tilt = 0.10 * math.sin(2 * math.pi * p["tilt_freq"] * t)
        rot = rotation_about_axis(np.array([1.0, 0.0, 0.0]), tilt)
        offset = self.amplitude * np.sin(
            2 * math.pi * p["freqs"] * t + p["phases"]
        ) * np.array([1.0, 0.5, 1.0])
        points = points @ rot.T + offset
        # Logical timestamp: i * period in ns. Real capture time rides on the
        # wire frame stamp, keeping payload bytes replay-deterministic.
        return KeypointFrame(
            timestamp=round(index * 1e9 / self.rate_hz), hand=self.hand, points=points
        )

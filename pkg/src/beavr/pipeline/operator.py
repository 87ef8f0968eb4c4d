"""Operator component: raw keypoints in, end-effector commands out.

Two stages, mirroring the transform topology: the transform stage smooths
raw keypoints and republishes them on TRANSFORMED_<side>; the command stage
consumes that topic and turns each frame into arm pose / hand fingertip
commands. Pause consumes frames without emitting; resume re-latches the
reference hand pose and robot pose so the first new command continues from
the last one.
"""
from __future__ import annotations

import threading

import numpy as np

from ..filters import ComplementaryFilter, MovingAverageFilter
from ..geometry import (
    DegenerateBasisError,
    HomogeneousTransform,
    KeypointFrame,
    Quaternion,
    ScaleProfile,
    compose_target,
    hand_basis,
    rotation_about_axis,
    vr_to_robot,
    wrist_relative,
    FINGERTIP_LANDMARKS,
)
from ..kinematics import forward_kinematics, load_chain
from ..netcore import BULK_QUEUE, CONTROL_QUEUE, TopicFrame, register_publisher, subscribe
from .config import RobotSpec, SessionConfig
from .messages import (
    EndEffectorCommand,
    SessionCommand,
    TOPIC_COMMAND,
    TOPIC_PAUSE,
    decode_command,
    decode_keypoints,
    encode_endeff,
    encode_keypoints,
    hand_topic,
    transformed_topic,
)
from .robot import home_state

# Y-up input frame to Z-up robot frame (proper rotation: x->x, y->z, z->-y).
DEFAULT_H_R_V = HomogeneousTransform(
    rotation=rotation_about_axis(np.array([1.0, 0.0, 0.0]), np.pi / 2)
)


class OperatorCore:
    """Retargeting state machine for one hand side. Single-owner; callers
    serialize step()/on_command() with the core's lock."""

    def __init__(
        self,
        config: SessionConfig,
        side: str,
        h_r_v: HomogeneousTransform = DEFAULT_H_R_V,
        scale_profile: ScaleProfile = ScaleProfile(),
    ):
        self.config = config
        self.side = side
        self.h_r_v = h_r_v
        self.scale_profile = scale_profile
        self.lock = threading.Lock()
        self.paused = False
        self._calibrated = False
        self._basis0: HomogeneousTransform | None = None
        self._smoother = MovingAverageFilter(config.filter_window)

        self.arm_robots: list[RobotSpec] = []
        self.hand_robots: list[RobotSpec] = []
        self._home_pose: dict[str, HomogeneousTransform] = {}
        self._latched: dict[str, HomogeneousTransform] = {}
        self._last_pose: dict[str, HomogeneousTransform] = {}
        self._comp: dict[str, ComplementaryFilter] = {}
        self._seq: dict[str, int] = {}
        for spec in config.robots_for_side(side):
            self._seq[spec.id] = 0
            if spec.role == "arm":
                self.arm_robots.append(spec)
                chain = load_chain(spec.chain)
                fk = forward_kinematics(chain, home_state(spec, chain))
                self._home_pose[spec.id] = fk[chain.joints[-1].child_link]
                self._comp[spec.id] = ComplementaryFilter(alpha=config.filter_alpha)
            else:
                self.hand_robots.append(spec)

    # -- stage 1: transform -------------------------------------------------

    def transform_stage(self, frame: KeypointFrame) -> KeypointFrame:
        """Moving-average smoothing over the raw landmark array."""
        smoothed = self._smoother.step(frame.points)
        return KeypointFrame(timestamp=frame.timestamp, hand=frame.hand, points=smoothed)

    # -- stage 2: commands ----------------------------------------------------

    def on_command(self, cmd: SessionCommand):
        with self.lock:
            if cmd.kind == "pause":
                self.paused = True
            elif cmd.kind == "resume":
                self.paused = False
                self._calibrated = False  # re-latch on the next frame

    def command_stage(self, frame: KeypointFrame, capture_ts: int) -> list[EndEffectorCommand]:
        with self.lock:
            if self.paused:
                return []
            try:
                basis = hand_basis(frame)
            except DegenerateBasisError:
                return []  # skip; downstream holds the previous command

            if not self._calibrated:
                self._basis0 = basis
                for spec in self.arm_robots:
                    # Initial latch uses the home pose; a resume re-latches to
                    # the last emitted pose so motion continues without a jump.
                    pose = self._last_pose.get(spec.id, self._home_pose[spec.id])
                    self._latched[spec.id] = pose
                    self._last_pose[spec.id] = pose
                    self._comp[spec.id].reset(
                        pose.translation, Quaternion.from_matrix(pose.rotation)
                    )
                self._calibrated = True

            rel = basis @ self._basis0.inverse()
            rel = HomogeneousTransform(
                rotation=rel.rotation, translation=rel.translation * self.config.arm_scale
            )

            commands = []
            for spec in self.arm_robots:
                target = compose_target(self._latched[spec.id], self.h_r_v, rel)
                position, orientation = self._comp[spec.id].step(
                    target.translation, Quaternion.from_matrix(target.rotation)
                )
                self._last_pose[spec.id] = HomogeneousTransform(
                    rotation=orientation.to_matrix(), translation=position
                )
                commands.append(
                    EndEffectorCommand(
                        robot_id=spec.id,
                        kind="arm",
                        seq=self._next_seq(spec.id),
                        capture_ts=capture_ts,
                        position=position,
                        orientation=orientation,
                    )
                )

            if self.hand_robots:
                relative = wrist_relative(frame)
                points = np.zeros((8, 3))
                row = 0
                for finger, (distal_idx, tip_idx) in FINGERTIP_LANDMARKS.items():
                    s_f = self.scale_profile.for_finger(finger)
                    for idx in (distal_idx, tip_idx):
                        points[row] = vr_to_robot(relative.points[idx], s_f)
                        row += 1
                if self.side == "left":
                    # The bundled hand chain is laid out for a right hand;
                    # a left hand drives it mirrored about the XZ plane.
                    points[:, 1] = -points[:, 1]
                for spec in self.hand_robots:
                    commands.append(
                        EndEffectorCommand(
                            robot_id=spec.id,
                            kind="hand",
                            seq=self._next_seq(spec.id),
                            capture_ts=capture_ts,
                            hand_points=points,
                        )
                    )
            return commands

    def _next_seq(self, robot_id: str) -> int:
        seq = self._seq[robot_id]
        self._seq[robot_id] = seq + 1
        return seq


def operator_run(config: SessionConfig, side: str, stop: threading.Event | None = None):
    """Run both operator stages for one side until `stop` is set."""
    stop = stop or threading.Event()
    core = OperatorCore(config, side)

    transformed_pub = register_publisher(config.transformed_endpoint(side), BULK_QUEUE)
    command_pubs = {
        spec.id: register_publisher(config.command_endpoint(spec.id), CONTROL_QUEUE)
        for spec in config.robots_for_side(side)
    }

    raw_stream = subscribe(config.detector_endpoint(), hand_topic(side))
    pause_stream = subscribe(config.detector_endpoint(), TOPIC_PAUSE)
    transformed_stream = subscribe(config.transformed_endpoint(side), transformed_topic(side))

    def _transform_loop():
        try:
            for frame in raw_stream:
                smoothed = core.transform_stage(decode_keypoints(frame.payload))
                transformed_pub.publish_frame(
                    TopicFrame(
                        topic=transformed_topic(side),
                        payload=encode_keypoints(smoothed),
                        capture_ts=frame.capture_ts,
                    )
                )
        except Exception:
            pass

    def _command_loop():
        try:
            for frame in transformed_stream:
                commands = core.command_stage(decode_keypoints(frame.payload), frame.capture_ts)
                for cmd in commands:
                    command_pubs[cmd.robot_id].publish(TOPIC_COMMAND, encode_endeff(cmd))
        except Exception:
            pass

    def _pause_loop():
        try:
            for frame in pause_stream:
                core.on_command(decode_command(frame.payload))
        except Exception:
            pass

    threads = [
        threading.Thread(target=_transform_loop, name=f"operator-{side}-transform", daemon=True),
        threading.Thread(target=_command_loop, name=f"operator-{side}-command", daemon=True),
        threading.Thread(target=_pause_loop, name=f"operator-{side}-pause", daemon=True),
    ]
    for t in threads:
        t.start()
    stop.wait()
    for stream in (raw_stream, pause_stream, transformed_stream):
        stream.close()
    for t in threads:
        t.join(timeout=2.0)
    transformed_pub.close()
    for pub in command_pubs.values():
        pub.close()


def operator_main(config: SessionConfig, side: str):
    operator_run(config, side)

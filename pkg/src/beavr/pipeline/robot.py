"""Interface component: applies commands to a kinematic simulated robot.

The control loop ticks at the configured rate with absolute deadlines. Each
tick publishes robot_state first (so send instants track the tick clock,
not IK compute time), then consumes the freshest command (stale sequence
numbers are dropped), solves IK warm-started from the current joints, and
applies the result instantaneously. A collision-blocked solve holds the
previous joints and raises the blocked flag.
"""
from __future__ import annotations

import threading
import time
from dataclasses import replace

import numpy as np

from ..geometry import HomogeneousTransform, Quaternion
from ..ik import solve_dls, solve_pose
from ..kinematics import JointState, KinematicChain, _fk_arrays, load_chain
from ..netcore import BULK_QUEUE, RetryPolicy, register_publisher, subscribe
from .config import RobotSpec, SessionConfig
from .messages import (
    EndEffectorCommand,
    RobotState,
    TOPIC_STATE,
    decode_endeff,
    encode_state,
)
from .pacing import RateLoop

# Flexed ready pose: the wrist center sits ~0.49 m from the shoulder, leaving
# reach margin in every direction for the teleop workspace sweeps and keeping
# the elbow and wrist away from their straightened singularities.
ARM_HOME = (0.0, 0.7, 0.0, 1.5, 0.0, 0.7, 0.0)


def home_state(spec: RobotSpec, chain: KinematicChain) -> JointState:
    if spec.home is not None:
        return JointState(q=chain.clamp(np.asarray(spec.home, dtype=np.float64)))
    if spec.role == "arm":
        return JointState(q=chain.clamp(np.asarray(ARM_HOME[: chain.joint_count])))
    return chain.neutral_state()


class SimulatedRobot:
    """Kinematic robot: IK in, joints out, no dynamics."""

    def __init__(self, spec: RobotSpec, config: SessionConfig):
        self.spec = spec
        self.chain = load_chain(spec.chain)
        self.settings = config.ik
        if spec.role == "hand":
            # The 8-target fingertip solve costs the most per iteration and
            # warm-starts within a few; a tighter budget bounds its worst
            # tick so one hard frame can't crowd out the rest of the loop.
            self.settings = replace(
                self.settings, max_iterations=min(self.settings.max_iterations, 4)
            )
        self.q = home_state(spec, self.chain)
        self.blocked = False
        self._ee_link = self.chain.joints[-1].child_link
        self._ee_joint = self.chain.link_parent_joint[self._ee_link]
        self._tip_joints = tuple(
            (self.chain.link_parent_joint[m.link], m.offset)
            for m in self.chain.markers
            if m.name.endswith("_tip")
        )

    def apply(self, cmd: EndEffectorCommand) -> bool:
        """Apply one command; returns True unless the solve was collision-blocked."""
        if cmd.kind == "arm":
            result = solve_pose(
                self.chain,
                self.q,
                self._ee_link,
                HomogeneousTransform(
                    rotation=cmd.orientation.to_matrix(), translation=cmd.position
                ),
                self.settings,
            )
        elif cmd.kind == "hand":
            result = solve_dls(self.chain, self.q, cmd.ik_targets(), self.settings)
        else:  # joint-space command: clamp and apply directly
            if cmd.q.size != self.chain.joint_count:
                raise ValueError(
                    f"joint command has {cmd.q.size} values, chain has "
                    f"{self.chain.joint_count} joints"
                )
            self.q = JointState(q=self.chain.clamp(cmd.q), timestamp=cmd.capture_ts)
            self.blocked = False
            return True
        self.blocked = result.collision_blocked
        if not result.collision_blocked:
            self.q = result.q
        return not result.collision_blocked

    def end_effector_pose(self) -> tuple[np.ndarray, Quaternion]:
        link_rot, link_tra, _, _ = _fk_arrays(self.chain, self.q.q)
        if self.spec.role == "arm":
            ji = self._ee_joint
            return link_tra[ji].copy(), Quaternion.from_matrix(link_rot[ji])
        # Hands have eight effectors; report the fingertip centroid.
        if not self._tip_joints:
            return np.zeros(3), Quaternion.identity()
        tips = [link_rot[ji] @ off + link_tra[ji] for ji, off in self._tip_joints]
        return np.mean(tips, axis=0), Quaternion.identity()


def interface_step(cmd: EndEffectorCommand, robot: SimulatedRobot, seq: int = 0) -> RobotState:
    """Apply one command to the robot and report the resulting state.

    The solve warm-starts from the robot's current joints; a collision-blocked
    result holds the previous joints and raises the blocked flag. apply_ts is
    stamped now, so apply_ts - cmd.capture_ts is this command's latency.
    """
    robot.apply(cmd)
    position, orientation = robot.end_effector_pose()
    return RobotState(
        robot_id=robot.spec.id,
        q=robot.q.q,
        position=position,
        orientation=orientation,
        blocked=robot.blocked,
        seq=seq,
        apply_ts=time.monotonic_ns(),
        source_capture_ts=cmd.capture_ts,
    )


def interface_run(config: SessionConfig, robot_id: str, stop: threading.Event | None = None):
    stop = stop or threading.Event()
    spec = config.robots[config.robot_index(robot_id)]
    robot = SimulatedRobot(spec, config)

    state_pub = register_publisher(config.state_endpoint(robot_id), BULK_QUEUE)
    cmd_stream = subscribe(
        config.command_endpoint(robot_id), "", retry=RetryPolicy(budget_s=120.0)
    )

    loop = RateLoop(config.rate)
    last_seq = -1
    state_seq = 0
    apply_ts = 0
    source_ts = 0

    def build_payload() -> bytes:
        position, orientation = robot.end_effector_pose()
        return encode_state(
            RobotState(
                robot_id=robot_id,
                q=robot.q.q,
                position=position,
                orientation=orientation,
                blocked=robot.blocked,
                seq=state_seq,
                apply_ts=apply_ts,
                source_capture_ts=source_ts,
            )
        )

    payload = build_payload()
    try:
        while not stop.is_set():
            loop.wait()
            # Publish first, apply second: send instants track the tick
            # clock instead of inheriting this tick's IK compute time.
            state_pub.publish(TOPIC_STATE, payload)
            state_seq += 1

            # Freshest-command policy: drain everything queued, keep the
            # newest sequence, never apply an older command after a newer one.
            newest: EndEffectorCommand | None = None
            for frame in cmd_stream.drain():
                try:
                    cmd = decode_endeff(frame.payload)
                except Exception:
                    continue  # corrupt frame: hold the last good command
                if cmd.seq > last_seq and (newest is None or cmd.seq > newest.seq):
                    newest = cmd
            if newest is not None:
                last_seq = newest.seq
                try:
                    robot.apply(newest)
                except ValueError:
                    pass  # dimension mismatch: hold the current joints
                else:
                    apply_ts = time.monotonic_ns()
                    source_ts = newest.capture_ts
            payload = build_payload()
    finally:
        cmd_stream.close()
        state_pub.close()


def interface_main(config: SessionConfig, robot_id: str):
    interface_run(config, robot_id)

"""Asynchronous think-act loop.

Inference runs in a side thread producing chunks of joint-space actions;
the act side streams one action per control tick at a fixed rate and never
blocks on inference. A bounded queue is the only shared structure. When the
queue runs dry the last action is repeated and an underrun is counted, so a
slow policy degrades smoothness but never cadence.
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..kinematics import JointState, KinematicChain, load_chain
from ..netcore import CONTROL_QUEUE, register_publisher
from .config import SessionConfig
from .messages import TOPIC_COMMAND, EndEffectorCommand, encode_endeff
from .pacing import RateLoop
from .robot import home_state


@dataclass(frozen=True)
class ThinkActReport:
    ticks: int
    underruns: int
    chunks: int
    achieved_hz: float
    jitter_ms: float
    policy_failed: bool


class ScriptedPolicy:
    """Deterministic sinusoid joint policy with an artificial compute delay.

    Stands in for a learned policy: ``policy(observation)`` returns the next
    chunk of joint states after sleeping ``delay_s`` to model inference time.
    """

    def __init__(
        self,
        chain: KinematicChain,
        chunk_size: int = 10,
        delay_s: float = 0.0,
        rate_hz: float = 30.0,
        amplitude: float = 0.15,
        seed: int = 7,
    ):
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.chain = chain
        self.chunk_size = chunk_size
        self.delay_s = delay_s
        self.rate_hz = rate_hz
        self.home = chain.neutral_state()
        rng = np.random.default_rng(seed)
        n = chain.joint_count
        self._freqs = rng.uniform(0.1, 0.4, size=n)
        self._phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
        self._amps = np.full(n, amplitude)
        self._step = 0

    def __call__(self, observation: JointState) -> list[JointState]:
        if self.delay_s > 0:
            time.sleep(self.delay_s)
        chunk = []
        base = self.home.q
        for k in range(self.chunk_size):
            t = (self._step + k) / self.rate_hz
            q = base + self._amps * np.sin(2.0 * np.pi * self._freqs * t + self._phases)
            chunk.append(JointState(self.chain.clamp(q)))
        self._step += self.chunk_size
        return chunk


def think_act_loop(
    policy,
    config: SessionConfig,
    robot_id: str | None = None,
    duration_s: float = 5.0,
    rate_hz: float | None = None,
    queue_depth: int = 20,
    initial: JointState | None = None,
    stop: threading.Event | None = None,
) -> ThinkActReport:
    """Run the decoupled think/act loop for a fixed duration.

    With ``robot_id`` set, each act tick publishes a joint-space command on
    that robot's command topic (an active interface will apply it); without
    one the loop still runs, which is enough to measure cadence/underruns.
    """
    rate = float(rate_hz if rate_hz is not None else config.rate)
    stop = stop if stop is not None else threading.Event()
    if initial is None:
        initial = getattr(policy, "home", None)
    if initial is None and robot_id is not None:
        spec = next(r for r in config.robots if r.id == robot_id)
        initial = home_state(spec, load_chain(spec.chain))
    if initial is None:
        raise ValueError("an initial joint state is required")

    actions: queue.Queue = queue.Queue(maxsize=queue_depth)
    refill_below = max(1, queue_depth // 2)
    state_lock = threading.Lock()
    shared = {"last": initial, "chunks": 0, "failed": False}

    def observation() -> JointState:
        with state_lock:
            return shared["last"]

    def enqueue(chunk) -> None:
        for action in chunk:
            while not stop.is_set():
                try:
                    actions.put(action, timeout=0.05)
                    break
                except queue.Full:
                    continue

    # Prefill one chunk synchronously so a slow-but-adequate policy
    # (chunk duration > inference delay) starts with zero underruns.
    try:
        enqueue(policy(initial))
        shared["chunks"] = 1
    except Exception:
        shared["failed"] = True

    def think():
        while not stop.is_set() and not shared["failed"]:
            if actions.qsize() >= refill_below:
                time.sleep(0.25 / rate)
                continue
            try:
                chunk = policy(observation())
            except Exception:
                with state_lock:
                    shared["failed"] = True
                return
            enqueue(chunk)
            with state_lock:
                shared["chunks"] += 1

    thinker = threading.Thread(target=think, daemon=True, name="think")
    thinker.start()

    publisher = None
    if robot_id is not None:
        publisher = register_publisher(config.command_endpoint(robot_id), CONTROL_QUEUE)

    ticks = 0
    underruns = 0
    seq = 0
    send_ts: list[int] = []
    loop = RateLoop(rate)
    deadline = time.monotonic() + duration_s
    try:
        while not stop.is_set() and time.monotonic() < deadline:
            loop.wait()
            try:
                action = actions.get_nowait()
                with state_lock:
                    shared["last"] = action
            except queue.Empty:
                underruns += 1
                action = observation()
            now = time.monotonic_ns()
            if publisher is not None:
                seq += 1
                cmd = EndEffectorCommand(
                    robot_id=robot_id, kind="joint", seq=seq, capture_ts=now,
                    q=action.q,
                )
                publisher.publish(TOPIC_COMMAND, encode_endeff(cmd))
            send_ts.append(now)
            ticks += 1
    finally:
        stop.set()
        thinker.join(timeout=2.0)
        if publisher is not None:
            publisher.close()

    achieved = 0.0
    jitter = 0.0
    if len(send_ts) >= 2:
        elapsed = (send_ts[-1] - send_ts[0]) / 1e9
        achieved = (ticks - 1) / elapsed if elapsed > 0 else 0.0
        intervals = np.diff(send_ts) / 1e6
        if len(intervals) > 1:
            jitter = float(np.std(intervals, ddof=1))
    with state_lock:
        return ThinkActReport(
            ticks=ticks,
            underruns=underruns,
            chunks=shared["chunks"],
            achieved_hz=achieved,
            jitter_ms=jitter,
            policy_failed=shared["failed"],
        )

"""Session supervision: detector/operator/interface as isolated processes.

Components are OS processes (spawn context) that talk only over netcore
sockets, so killing one leaves the rest running; the supervisor can restart
the detector mid-session. The parent subscribes to every robot_state stream
for reporting and optional dataset recording.
"""
from __future__ import annotations

import multiprocessing as mp
import socket
import statistics
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..recorder import Dataset, FrameRecord
from ..kinematics import load_chain
from ..netcore import subscribe, RetryPolicy
from .config import SessionConfig
from .detector import KeypointLogger, detector_main
from .messages import RobotState, TOPIC_STATE, decode_state
from .operator import operator_main
from .pacing import RateLoop
from .robot import interface_main


class SessionStartupError(RuntimeError):
    pass


@dataclass(frozen=True)
class RobotSummary:
    robot_id: str
    states: int
    achieved_hz: float
    jitter_ms: float
    latency_ms_mean: float
    blocked_states: int


@dataclass(frozen=True)
class SessionReport:
    duration_s: float
    robots: tuple[RobotSummary, ...]
    detector_restarts: int
    recorded_frames: int


def _check_ports_free(config: SessionConfig):
    for port in config.all_ports():
        for p in (port, port + 1):  # +1 is the handshake channel
            probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            try:
                probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                probe.bind(("127.0.0.1", p))
            except OSError as exc:
                raise SessionStartupError(
                    f"port conflict: 127.0.0.1:{p} is in use ({exc})"
                ) from exc
            finally:
                probe.close()


class SessionHandle:
    """A running session. Create, drive, then stop() for the report."""

    def __init__(
        self,
        config: SessionConfig,
        start_detector: bool = True,
        start_operators: bool = True,
    ):
        _check_ports_free(config)
        self.config = config
        self._ctx = mp.get_context("spawn")
        self._t0 = time.monotonic_ns()
        self._detector_restarts = 0
        self._recorded_frames = 0
        self._stopped = False

        self._interfaces = {}
        for spec in config.robots:
            proc = self._ctx.Process(
                target=interface_main, args=(config, spec.id), name=f"interface-{spec.id}"
            )
            proc.start()
            self._interfaces[spec.id] = proc

        self._operators = {}
        if start_operators:
            for side in config.sides():
                proc = self._ctx.Process(
                    target=operator_main, args=(config, side), name=f"operator-{side}"
                )
                proc.start()
                self._operators[side] = proc

        self._detector = None
        if start_detector:
            self._detector = self._ctx.Process(
                target=detector_main, args=(config,), name="detector"
            )
            self._detector.start()

        # State taps: one subscriber thread per robot feeding sample buffers.
        self._samples: dict[str, deque] = {r.id: deque(maxlen=200_000) for r in config.robots}
        self._latest: dict[str, RobotState] = {}
        self._latest_lock = threading.Lock()
        self._state_streams = {}
        self._state_threads = []
        for spec in config.robots:
            stream = subscribe(
                config.state_endpoint(spec.id), TOPIC_STATE, retry=RetryPolicy(budget_s=60.0)
            )
            self._state_streams[spec.id] = stream
            thread = threading.Thread(
                target=self._state_tap, args=(spec.id, stream), daemon=True,
                name=f"state-tap-{spec.id}",
            )
            thread.start()
            self._state_threads.append(thread)

        self._logger = (
            KeypointLogger(config.detector_endpoint(), config.keypoint_log)
            if config.keypoint_log
            else None
        )

        self._record_stop = threading.Event()
        self._record_thread = None
        if config.record_path:
            self._record_thread = threading.Thread(
                target=self._record_loop, daemon=True, name="recorder"
            )
            self._record_thread.start()

    # -- taps ---------------------------------------------------------------

    def _state_tap(self, robot_id: str, stream):
        try:
            for frame in stream:
                state = decode_state(frame.payload)
                self._samples[robot_id].append((frame.capture_ts, state))
                with self._latest_lock:
                    self._latest[robot_id] = state
        except Exception:
            pass  # stream closed at stop()

    def _record_loop(self):
        config = self.config
        dims = {r.id: load_chain(r.chain).joint_count for r in config.robots}
        total = sum(dims.values())
        dataset = Dataset(
            config.record_path,
            fps=config.rate,
            state_dim=total,
            action_dim=total,
            fmt=config.record_format,
            robots=[{"id": r.id, "role": r.role, "chain": r.chain, "joints": dims[r.id]}
                    for r in config.robots],
        )
        writer = dataset.new_episode(task="teleoperation session")
        loop = RateLoop(config.rate)
        previous = None
        i = 0
        while not self._record_stop.is_set():
            loop.wait()
            with self._latest_lock:
                if len(self._latest) < len(config.robots):
                    continue  # not every robot has reported yet
                current = np.concatenate([self._latest[r.id].q for r in config.robots])
            observation = current if previous is None else previous
            writer.append_frame(
                FrameRecord(state=observation, action=current, timestamp=i / config.rate)
            )
            previous = current
            i += 1
        if len(writer):
            writer.finalize()
        self._recorded_frames = len(writer)

    # -- component control ----------------------------------------------------

    def detector_alive(self) -> bool:
        return self._detector is not None and self._detector.is_alive()

    def operators_alive(self) -> bool:
        return all(p.is_alive() for p in self._operators.values())

    def interfaces_alive(self) -> bool:
        return all(p.is_alive() for p in self._interfaces.values())

    def kill_detector(self):
        if self._detector is not None:
            self._detector.kill()
            self._detector.join(timeout=5.0)

    def restart_detector(self):
        self._detector = self._ctx.Process(
            target=detector_main, args=(self.config,), name="detector"
        )
        self._detector.start()
        self._detector_restarts += 1

    # -- observation ------------------------------------------------------------

    def samples(self, robot_id: str) -> list[tuple[int, RobotState]]:
        return list(self._samples[robot_id])

    def latest_state(self, robot_id: str) -> RobotState | None:
        with self._latest_lock:
            return self._latest.get(robot_id)

    def wait_for_states(self, timeout_s: float = 15.0) -> bool:
        """Block until every robot has published at least one state."""
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            with self._latest_lock:
                if len(self._latest) == len(self.config.robots):
                    return True
            time.sleep(0.01)
        return False

    # -- shutdown ------------------------------------------------------------------

    def stop(self) -> SessionReport:
        if self._stopped:
            raise RuntimeError("session already stopped")
        self._stopped = True
        elapsed = (time.monotonic_ns() - self._t0) / 1e9

        if self._record_thread is not None:
            self._record_stop.set()
            self._record_thread.join(timeout=5.0)
        if self._logger is not None:
            self._logger.close()

        procs = list(self._interfaces.values()) + list(self._operators.values())
        if self._detector is not None:
            procs.append(self._detector)
        for proc in procs:
            if proc.is_alive():
                proc.terminate()
        for proc in procs:
            proc.join(timeout=5.0)
            if proc.is_alive():
                proc.kill()
                proc.join(timeout=5.0)

        for stream in self._state_streams.values():
            stream.close()
        for thread in self._state_threads:
            thread.join(timeout=2.0)

        return SessionReport(
            duration_s=elapsed,
            robots=tuple(
                summarize_samples(r.id, self.samples(r.id)) for r in self.config.robots
            ),
            detector_restarts=self._detector_restarts,
            recorded_frames=self._recorded_frames,
        )


def summarize_samples(robot_id: str, samples: list[tuple[int, RobotState]]) -> RobotSummary:
    if len(samples) < 2:
        return RobotSummary(robot_id, len(samples), 0.0, 0.0, 0.0, 0)
    send_ts = [s[0] for s in samples]
    elapsed = (send_ts[-1] - send_ts[0]) / 1e9
    intervals = np.diff(send_ts) / 1e6  # ms
    latencies = []
    last_apply = None
    for _, state in samples:
        if state.source_capture_ts > 0 and state.apply_ts != last_apply:
            latencies.append((state.apply_ts - state.source_capture_ts) / 1e6)
            last_apply = state.apply_ts
    return RobotSummary(
        robot_id=robot_id,
        states=len(samples),
        achieved_hz=(len(samples) - 1) / elapsed if elapsed > 0 else 0.0,
        jitter_ms=float(statistics.stdev(intervals)) if len(intervals) > 1 else 0.0,
        latency_ms_mean=float(np.mean(latencies)) if latencies else 0.0,
        blocked_states=sum(1 for _, s in samples if s.blocked),
    )


def run_session(config: SessionConfig, duration_s: float | None = None) -> SessionReport:
    """Start a session, run for the duration, and return the report."""
    duration = duration_s if duration_s is not None else config.duration_s
    if duration is None:
        raise ValueError("a duration is required for a blocking run")
    handle = SessionHandle(config)
    try:
        handle.wait_for_states()
        time.sleep(duration)
    finally:
        report = handle.stop()
    return report

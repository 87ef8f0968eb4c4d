"""Latency, jitter, and rate measurement over live sessions on loopback.

Methodology: run a full scripted session, tap every robot_state message,
and aggregate per robot. Jitter is the standard deviation of inter-send
intervals; latency is one-way capture→apply on the single-host monotonic
clock; achieved_hz = (ticks − 1) / elapsed.
"""
from __future__ import annotations

import io
import json
import csv as csv_mod
import time
from dataclasses import dataclass

import numpy as np

from .pipeline.config import ConfigError, SessionConfig
from .pipeline.session import SessionHandle

_LATENCY_KEYS = ("mean", "p50", "p95", "p99")
_THRESHOLD_METRICS = (
    "achieved_hz",
    "jitter_ms",
    "latency_ms_mean",
    "latency_ms_p50",
    "latency_ms_p95",
    "latency_ms_p99",
    "drops",
)
_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


@dataclass(frozen=True)
class TimingSample:
    robot_id: str
    send_ts: int  # state publish instant (wire stamp)
    apply_ts: int  # when the interface applied the command
    capture_ts: int  # when the source frame was captured

    def __post_init__(self):
        if self.capture_ts > 0 and self.apply_ts < self.capture_ts:
            raise ValueError("apply_ts must be >= capture_ts")


@dataclass(frozen=True)
class RobotMetrics:
    robot_id: str
    ticks: int
    achieved_hz: float
    jitter_ms: float
    latency_ms: dict
    drops: int

    def __post_init__(self):
        if self.achieved_hz <= 0:
            raise ValueError(f"{self.robot_id}: achieved_hz must be > 0")
        missing = [k for k in _LATENCY_KEYS if k not in self.latency_ms]
        if missing:
            raise ValueError(f"{self.robot_id}: latency_ms missing {missing}")
        p = self.latency_ms
        if not (p["p50"] <= p["p95"] <= p["p99"]):
            raise ValueError(f"{self.robot_id}: latency percentiles out of order")

    def value(self, metric: str) -> float:
        if metric.startswith("latency_ms_"):
            key = metric.removeprefix("latency_ms_")
            if key not in self.latency_ms:
                raise KeyError(f"unknown latency key {metric!r}")
            return float(self.latency_ms[key])
        if metric not in ("ticks", "achieved_hz", "jitter_ms", "drops"):
            raise KeyError(f"unknown metric {metric!r}")
        return float(getattr(self, metric))


@dataclass(frozen=True)
class MetricsReport:
    duration_s: float
    rate_hz: float
    robots: tuple[RobotMetrics, ...]
    samples: dict

    def __post_init__(self):
        if not self.robots:
            raise ValueError("report must cover at least one robot")

    def robot(self, robot_id: str) -> RobotMetrics:
        for r in self.robots:
            if r.robot_id == robot_id:
                return r
        raise KeyError(f"no metrics for robot {robot_id!r}")


def metrics_from_samples(
    robot_id: str, samples: list[TimingSample], seqs: list[int] | None = None
) -> RobotMetrics:
    """Aggregate one robot's tick samples into its metrics row."""
    if len(samples) < 2:
        raise ValueError(f"{robot_id}: need >= 2 samples, got {len(samples)}")
    send = np.array([s.send_ts for s in samples], dtype=np.int64)
    elapsed = (send[-1] - send[0]) / 1e9
    intervals = np.diff(send) / 1e6
    latencies = []
    last_apply = None
    for s in samples:
        if s.capture_ts > 0 and s.apply_ts != last_apply:
            latencies.append((s.apply_ts - s.capture_ts) / 1e6)
            last_apply = s.apply_ts
    lat = np.asarray(latencies if latencies else [0.0])
    drops = 0
    if seqs:
        drops = int(seqs[-1] - seqs[0] + 1 - len(seqs))
    return RobotMetrics(
        robot_id=robot_id,
        ticks=len(samples),
        achieved_hz=(len(samples) - 1) / elapsed,
        jitter_ms=float(np.std(intervals, ddof=1)) if len(intervals) > 1 else 0.0,
        latency_ms={
            "mean": float(np.mean(lat)),
            "p50": float(np.percentile(lat, 50)),
            "p95": float(np.percentile(lat, 95)),
            "p99": float(np.percentile(lat, 99)),
        },
        drops=drops,
    )


def measure_run(config: SessionConfig, duration_s: float) -> MetricsReport:
    """Run a scripted session for the duration and aggregate timing metrics."""
    if duration_s < 10.0:
        raise ValueError(f"duration must be >= 10 s for stable statistics, got {duration_s}")
    handle = SessionHandle(config)
    try:
        if not handle.wait_for_states(timeout_s=30.0):
            raise RuntimeError("session did not produce states from every robot")
        time.sleep(duration_s)
        raw = {r.id: handle.samples(r.id) for r in config.robots}
    finally:
        handle.stop()

    robots = []
    samples = {}
    for spec in config.robots:
        ticks = [
            TimingSample(
                robot_id=spec.id,
                send_ts=wire_ts,
                apply_ts=state.apply_ts,
                capture_ts=state.source_capture_ts,
            )
            for wire_ts, state in raw[spec.id]
        ]
        samples[spec.id] = tuple(ticks)
        robots.append(
            metrics_from_samples(spec.id, ticks, [state.seq for _, state in raw[spec.id]])
        )
    return MetricsReport(
        duration_s=float(duration_s), rate_hz=config.rate, robots=tuple(robots),
        samples=samples,
    )


# -- serialization -------------------------------------------------------------


def emit_report(report: MetricsReport, format: str = "json", raw: bool = False) -> str:
    if format == "json":
        doc = {
            "duration_s": report.duration_s,
            "rate_hz": report.rate_hz,
            "robots": {
                r.robot_id: {
                    "ticks": r.ticks,
                    "achieved_hz": r.achieved_hz,
                    "jitter_ms": r.jitter_ms,
                    "latency_ms": dict(sorted(r.latency_ms.items())),
                    "drops": r.drops,
                }
                for r in report.robots
            },
        }
        if raw:
            doc["samples"] = {
                rid: [[s.send_ts, s.apply_ts, s.capture_ts] for s in ticks]
                for rid, ticks in report.samples.items()
            }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if format == "csv":
        out = io.StringIO()
        writer = csv_mod.writer(out, lineterminator="\n")
        writer.writerow(
            ["robot", "ticks", "achieved_hz", "jitter_ms",
             "latency_ms_mean", "latency_ms_p50", "latency_ms_p95", "latency_ms_p99",
             "drops", "duration_s", "rate_hz"]
        )
        for r in report.robots:
            writer.writerow(
                [r.robot_id, r.ticks, f"{r.achieved_hz:.6f}", f"{r.jitter_ms:.6f}",
                 f"{r.latency_ms['mean']:.6f}", f"{r.latency_ms['p50']:.6f}",
                 f"{r.latency_ms['p95']:.6f}", f"{r.latency_ms['p99']:.6f}",
                 r.drops, f"{report.duration_s:.6f}", f"{report.rate_hz:.6f}"]
            )
        return out.getvalue()
    raise ValueError(f"unknown report format {format!r}")


def compare_thresholds(report: MetricsReport, thresholds: dict) -> dict:
    """Check every robot against each threshold; returns per-check verdicts.

    Threshold schema: {metric: {"op": "<"|"<="|">"|">="|"==", "value": number}}.
    """
    checks = []
    for metric, rule in thresholds.items():
        if metric not in _THRESHOLD_METRICS:
            raise ConfigError(
                f"unknown metric {metric!r}; expected one of {_THRESHOLD_METRICS}"
            )
        if not isinstance(rule, dict) or "op" not in rule or "value" not in rule:
            raise ConfigError(f"threshold for {metric!r} must provide op and value")
        op = rule["op"]
        if op not in _OPS:
            raise ConfigError(f"unknown op {op!r}; expected one of {sorted(_OPS)}")
        value = float(rule["value"])
        for r in report.robots:
            actual = r.value(metric)
            checks.append(
                {
                    "robot": r.robot_id,
                    "metric": metric,
                    "op": op,
                    "value": value,
                    "actual": actual,
                    "pass": bool(_OPS[op](actual, value)),
                }
            )
    return {"pass": all(c["pass"] for c in checks), "checks": checks}

"""Metrics aggregation against hand-computed statistics."""
from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from beavr.bench import (
    MetricsReport,
    RobotMetrics,
    TimingSample,
    compare_thresholds,
    emit_report,
    measure_run,
    metrics_from_samples,
)
from beavr.pipeline.config import ConfigError, config_1

MS = 1_000_000  # ns per ms


def synthetic_samples(n=60, period_ms=10.0, jitter_pattern=(0.0, 0.4, -0.4, 0.2)):
    """Deterministic tick stream with known intervals and latencies."""
    samples = []
    send = 1_000 * MS
    for i in range(n):
        jitter = jitter_pattern[i % len(jitter_pattern)]
        send += int((period_ms + jitter) * MS)
        latency = (3.0 + (i % 5)) * MS  # 3-7 ms latency cycle
        samples.append(
            TimingSample(
                robot_id="r",
                send_ts=send,
                apply_ts=send - MS,
                capture_ts=send - MS - int(latency),
            )
        )
    return samples


def test_timing_sample_validation():
    TimingSample(robot_id="r", send_ts=2, apply_ts=5, capture_ts=0)  # 0 = unknown
    with pytest.raises(ValueError):
        TimingSample(robot_id="r", send_ts=2, apply_ts=5, capture_ts=9)


def test_metrics_match_numpy_oracle():
    samples = synthetic_samples()
    metrics = metrics_from_samples("r", samples)

    send = np.array([s.send_ts for s in samples], dtype=np.float64)
    intervals = np.diff(send) / MS
    expected_hz = (len(samples) - 1) / ((send[-1] - send[0]) / 1e9)
    assert metrics.achieved_hz == pytest.approx(expected_hz, rel=1e-12)
    assert metrics.jitter_ms == pytest.approx(np.std(intervals, ddof=1), rel=1e-12)

    latencies = np.array([(s.apply_ts - s.capture_ts) / MS for s in samples])
    assert metrics.latency_ms["mean"] == pytest.approx(latencies.mean(), rel=1e-12)
    for p, key in ((50, "p50"), (95, "p95"), (99, "p99")):
        assert metrics.latency_ms[key] == pytest.approx(np.percentile(latencies, p), rel=1e-12)
    assert metrics.ticks == len(samples)
    assert metrics.drops == 0


def test_latency_deduplicated_on_held_commands():
    # A held command reapplies with the same apply_ts; only the first tick
    # may count toward latency or held frames would skew the distribution.
    base = synthetic_samples(n=4)
    held = [
        base[0],
        TimingSample("r", base[1].send_ts, base[0].apply_ts, base[0].capture_ts),
        TimingSample("r", base[2].send_ts, base[0].apply_ts, base[0].capture_ts),
        base[3],
    ]
    metrics = metrics_from_samples("r", held)
    lat0 = (base[0].apply_ts - base[0].capture_ts) / MS
    lat3 = (base[3].apply_ts - base[3].capture_ts) / MS
    assert metrics.latency_ms["mean"] == pytest.approx((lat0 + lat3) / 2, rel=1e-12)


def test_drops_counted_from_seq_gaps():
    samples = synthetic_samples(n=5)
    metrics = metrics_from_samples("r", samples, seqs=[10, 11, 13, 16, 17])
    assert metrics.drops == 3  # span 8, seen 5


def test_metrics_require_two_samples():
    with pytest.raises(ValueError):
        metrics_from_samples("r", synthetic_samples(n=1))


def test_robot_metrics_validation_and_accessor():
    good = dict(mean=5.0, p50=4.0, p95=8.0, p99=9.0)
    m = RobotMetrics(robot_id="r", ticks=10, achieved_hz=30.0, jitter_ms=0.5,
                     latency_ms=good, drops=0)
    assert m.value("achieved_hz") == 30.0
    assert m.value("latency_ms_p95") == 8.0
    with pytest.raises(KeyError):
        m.value("nope")
    with pytest.raises(ValueError):
        RobotMetrics(robot_id="r", ticks=10, achieved_hz=0.0, jitter_ms=0.5,
                     latency_ms=good, drops=0)
    crossed = dict(mean=5.0, p50=9.0, p95=8.0, p99=9.5)
    with pytest.raises(ValueError):
        RobotMetrics(robot_id="r", ticks=10, achieved_hz=30.0, jitter_ms=0.5,
                     latency_ms=crossed, drops=0)


def make_report():
    samples = synthetic_samples()
    return MetricsReport(
        duration_s=10.0,
        rate_hz=30.0,
        robots=(metrics_from_samples("r", samples),),
        samples={"r": samples},
    )


def test_emit_report_json_round_trips():
    report = make_report()
    doc = json.loads(emit_report(report, "json"))
    assert doc["duration_s"] == 10.0
    assert doc["robots"]["r"]["achieved_hz"] == pytest.approx(report.robots[0].achieved_hz)
    assert "samples" not in doc
    with_raw = json.loads(emit_report(report, "json", raw=True))
    assert len(with_raw["samples"]["r"]) == 60


def test_emit_report_csv_parses_back():
    report = make_report()
    rows = list(csv.DictReader(io.StringIO(emit_report(report, "csv"))))
    assert len(rows) == 1
    assert rows[0]["robot"] == "r"
    assert float(rows[0]["achieved_hz"]) == pytest.approx(report.robots[0].achieved_hz, abs=1e-5)
    assert float(rows[0]["latency_ms_p99"]) == pytest.approx(
        report.robots[0].latency_ms["p99"], abs=1e-5
    )


def test_emit_report_unknown_format():
    with pytest.raises(ValueError):
        emit_report(make_report(), "xml")


def test_compare_thresholds_ops_and_errors():
    report = make_report()
    hz = report.robots[0].achieved_hz
    result = compare_thresholds(
        report,
        {
            "achieved_hz": {"op": ">=", "value": hz - 1.0},
            "jitter_ms": {"op": "<", "value": 50.0},
            "latency_ms_mean": {"op": "<=", "value": 100.0},
        },
    )
    assert result["pass"] is True
    assert len(result["checks"]) == 3
    failing = compare_thresholds(report, {"achieved_hz": {"op": ">", "value": hz + 1.0}})
    assert failing["pass"] is False
    assert failing["checks"][0]["actual"] == pytest.approx(hz)

    with pytest.raises(ConfigError):
        compare_thresholds(report, {"warp_factor": {"op": "<", "value": 1}})
    with pytest.raises(ConfigError):
        compare_thresholds(report, {"jitter_ms": {"op": "~", "value": 1}})
    with pytest.raises(ConfigError):
        compare_thresholds(report, {"jitter_ms": 3.0})


def test_measure_run_rejects_short_durations():
    with pytest.raises(ValueError):
        measure_run(config_1(), 5.0)

"""The beavr command line: run, replay, bench, gateway."""
from __future__ import annotations

import json
import subprocess
import sys

import pytest
import yaml

from beavr.cli import build_parser, main
from beavr.pipeline.config import config_1, config_to_dict
from beavr.pipeline.hand_template import ScriptedHand
from beavr.pipeline.messages import TOPIC_RIGHT, encode_keypoints


def _write_config(tmp_path, config, name="session.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(config_to_dict(config)))
    return str(path)


def test_cli_requires_a_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_cli_rejects_unknown_arguments():
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--warp-speed"])
    assert exc.value.code == 2


def test_cli_help_exits_zero():
    for argv in (["--help"], ["run", "--help"], ["gateway", "--help"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 0


def test_parser_defaults():
    args = build_parser().parse_args(["bench"])
    assert args.duration == 60.0
    assert args.format == "json"
    assert not args.raw


def test_console_script_smoke():
    proc = subprocess.run(
        ["beavr", "--help"], capture_output=True, text=True, timeout=60
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "bench" in proc.stdout
    proc = subprocess.run(
        [sys.executable, "-m", "beavr", "--help"], capture_output=True, text=True, timeout=60
    )
    assert proc.returncode == 0


def _run_cli(argv, timeout=180):
    proc = subprocess.run(
        [sys.executable, "-m", "beavr", *argv], capture_output=True, text=True, timeout=timeout
    )
    return proc


def test_cli_run_prints_session_report(tmp_path, port_shift):
    config_path = _write_config(tmp_path, config_1().with_port_shift(port_shift))
    proc = _run_cli(["run", "--config", config_path, "--duration", "2"])
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    assert report["detector_restarts"] == 0
    by_id = {r["robot_id"]: r for r in report["robots"]}
    assert set(by_id) == {"arm_right", "hand_right"}
    for summary in by_id.values():
        assert summary["states"] > 30
        assert summary["achieved_hz"] > 20.0


def test_cli_replay_drives_the_session(tmp_path, port_shift):
    log_path = tmp_path / "hands.jsonl"
    hand = ScriptedHand(seed=5)
    with log_path.open("w") as f:
        for i in range(120):
            payload = encode_keypoints(hand.frame(i))
            f.write(
                json.dumps(
                    {"topic": TOPIC_RIGHT, "capture_ts": i + 1, "payload": payload.hex()}
                )
                + "\n"
            )
    config_path = _write_config(tmp_path, config_1().with_port_shift(port_shift))
    proc = _run_cli(["replay", str(log_path), "--config", config_path, "--duration", "3"])
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    for summary in report["robots"]:
        assert summary["states"] > 30


def test_cli_bench_report_and_thresholds(tmp_path, port_shift):
    config_path = _write_config(tmp_path, config_1().with_port_shift(port_shift))
    out_path = tmp_path / "bench.json"
    thresholds_path = tmp_path / "thresholds.yaml"
    thresholds_path.write_text(
        yaml.safe_dump(
            {
                "achieved_hz": {"op": ">", "value": 10.0},  # should pass
                "jitter_ms": {"op": "<", "value": 1e-9},  # impossible: forces exit 1
            }
        )
    )
    proc = _run_cli(
        [
            "bench",
            "--config",
            config_path,
            "--duration",
            "10",
            "--out",
            str(out_path),
            "--thresholds",
            str(thresholds_path),
        ]
    )
    assert proc.returncode == 1  # the impossible jitter bound fails the run
    assert "PASS" in proc.stderr and "FAIL" in proc.stderr

    report = json.loads(out_path.read_text())
    by_id = report["robots"]
    assert set(by_id) == {"arm_right", "hand_right"}
    for doc in by_id.values():
        assert doc["achieved_hz"] == pytest.approx(30.0, rel=0.2)
        assert doc["jitter_ms"] >= 0.0
        assert doc["latency_ms"]["mean"] > 0.0

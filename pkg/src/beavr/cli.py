"""Command-line entry points: run, replay, bench, gateway."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import threading
import time

import yaml

from .bench import compare_thresholds, emit_report, measure_run
from .pipeline.config import SessionConfig, config_1, load_config
from .pipeline.gateway import gateway_serve
from .pipeline.session import SessionHandle


def _load(args) -> SessionConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return config_1()


def _print_session_report(report) -> None:
    doc = dataclasses.asdict(report)
    print(json.dumps(doc, indent=2, sort_keys=True))


def _run_until_stopped(handle: SessionHandle, duration_s: float | None) -> int:
    try:
        handle.wait_for_states()
        if duration_s is not None:
            time.sleep(duration_s)
        else:
            print("session running; Ctrl-C to stop", file=sys.stderr)
            threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        _print_session_report(handle.stop())
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    duration = args.duration if args.duration is not None else config.duration_s
    return _run_until_stopped(SessionHandle(config), duration)


def cmd_replay(args) -> int:
    config = dataclasses.replace(_load(args), source="replay", replay_log=args.log)
    return _run_until_stopped(SessionHandle(config), args.duration)


def cmd_bench(args) -> int:
    config = _load(args)
    report = measure_run(config, duration_s=args.duration)
    document = emit_report(report, format=args.format, raw=args.raw)
    if args.out:
        with open(args.out, "w") as f:
            f.write(document)
    else:
        print(document, end="")
    if args.thresholds:
        with open(args.thresholds) as f:
            thresholds = yaml.safe_load(f)
        verdict = compare_thresholds(report, thresholds)
        for check in verdict["checks"]:
            status = "PASS" if check["pass"] else "FAIL"
            print(
                f"{status} {check['robot']} {check['metric']} "
                f"{check['actual']:.4f} {check['op']} {check['value']}",
                file=sys.stderr,
            )
        return 0 if verdict["pass"] else 1
    return 0


def cmd_gateway(args) -> int:
    config = _load(args)
    if not config.feed_port:
        config = dataclasses.replace(config, feed_port=9100)
    try:
        gateway_serve(config, port=args.port)
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beavr", description="desk-scale teleoperation stack"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a live session")
    p_run.add_argument("--config", help="session config file (YAML)")
    p_run.add_argument("--duration", type=float, default=None, help="seconds to run")
    p_run.set_defaults(fn=cmd_run)

    p_replay = sub.add_parser("replay", help="replay a recorded keypoint log")
    p_replay.add_argument("log", help="keypoint log (JSONL) to replay")
    p_replay.add_argument("--config", help="session config file (YAML)")
    p_replay.add_argument("--duration", type=float, default=None)
    p_replay.set_defaults(fn=cmd_replay)

    p_bench = sub.add_parser("bench", help="measure rate/jitter/latency")
    p_bench.add_argument("--config", help="session config file (YAML)")
    p_bench.add_argument("--duration", type=float, default=60.0)
    p_bench.add_argument("--format", choices=("json", "csv"), default="json")
    p_bench.add_argument("--raw", action="store_true", help="include raw samples (JSON)")
    p_bench.add_argument("--thresholds", help="threshold file: metric -> {op, value}")
    p_bench.add_argument("--out", help="write the report here instead of stdout")
    p_bench.set_defaults(fn=cmd_bench)

    p_gw = sub.add_parser("gateway", help="serve the cockpit WebSocket gateway")
    p_gw.add_argument("--config", help="session config file (YAML)")
    p_gw.add_argument("--port", type=int, default=8080)
    p_gw.set_defaults(fn=cmd_gateway)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Session configuration: robots, rates, sources, ports, filter/IK settings.

Port scheme (handshake channels live one port above each):
    detector publisher      :9000   topics right/left/button/pause
    transformed stage       :9002 (+4 per extra side)  topic TRANSFORMED_<side>
    robot k command         :10008 + 8k   topic endeff_coords
    robot k state           :10010 + 8k   topic robot_state
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..ik import IkSettings
from ..netcore import Endpoint

ROLES = ("arm", "hand")
SIDES = ("right", "left")
SOURCES = ("scripted", "replay", "feed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RobotSpec:
    """One simulated robot: a chain driven by one hand side in one role."""

    id: str
    role: str
    chain: str
    side: str = "right"
    home: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"robot {self.id}: role must be one of {ROLES}")
        if self.side not in SIDES:
            raise ConfigError(f"robot {self.id}: side must be one of {SIDES}")


@dataclass(frozen=True)
class SessionConfig:
    robots: tuple[RobotSpec, ...]
    rate: float = 30.0
    source: str = "scripted"
    seed: int = 7
    duration_s: float | None = None
    replay_log: str | None = None
    feed_port: int | None = None
    record_path: str | None = None
    record_format: str = "parquet"
    keypoint_log: str | None = None
    filter_window: int = 5
    filter_alpha: float = 0.35
    arm_scale: float = 1.0
    # Sessions run IK on a real-time budget: warm-started tracking converges
    # in a few iterations, and a bounded worst case keeps one hard solve from
    # stealing the rest of the tick. Library callers keep the full default.
    ik: IkSettings = field(default_factory=lambda: IkSettings(max_iterations=16))
    detector_port: int = 9000
    transformed_base: int = 9002
    command_base: int = 10008

    def __post_init__(self):
        if not self.robots:
            raise ConfigError("at least one robot is required")
        if not 1.0 <= self.rate <= 500.0:
            raise ConfigError(f"rate {self.rate} outside [1, 500] Hz")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}")
        if self.source == "replay" and not self.replay_log:
            raise ConfigError("replay source requires replay_log")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ConfigError("robot ids must be unique")
        if self.filter_window < 1:
            raise ConfigError("filter_window must be >= 1")
        if not 0.0 < self.filter_alpha <= 1.0:
            raise ConfigError("filter_alpha must be in (0, 1]")
        object.__setattr__(self, "robots", tuple(self.robots))

    # -- endpoints ---------------------------------------------------------

    def detector_endpoint(self) -> Endpoint:
        return Endpoint("127.0.0.1", self.detector_port)

    def transformed_endpoint(self, side: str) -> Endpoint:
        return Endpoint("127.0.0.1", self.transformed_base + 4 * SIDES.index(side))

    def robot_index(self, robot_id: str) -> int:
        for i, r in enumerate(self.robots):
            if r.id == robot_id:
                return i
        raise KeyError(f"unknown robot {robot_id!r}")

    def command_endpoint(self, robot_id: str) -> Endpoint:
        return Endpoint("127.0.0.1", self.command_base + 8 * self.robot_index(robot_id))

    def state_endpoint(self, robot_id: str) -> Endpoint:
        return Endpoint("127.0.0.1", self.command_base + 8 * self.robot_index(robot_id) + 2)

    def feed_endpoint(self) -> Endpoint | None:
        return Endpoint("127.0.0.1", self.feed_port) if self.feed_port else None

    def sides(self) -> tuple[str, ...]:
        return tuple(s for s in SIDES if any(r.side == s for r in self.robots))

    def robots_for_side(self, side: str) -> tuple[RobotSpec, ...]:
        return tuple(r for r in self.robots if r.side == side)

    def all_ports(self) -> list[int]:
        """Every data port the session binds (handshake ports are +1 each)."""
        ports = [self.detector_port]
        if self.feed_port:
            ports.append(self.feed_port)
        ports.extend(self.transformed_endpoint(s).port for s in self.sides())
        for r in self.robots:
            ports.append(self.command_endpoint(r.id).port)
            ports.append(self.state_endpoint(r.id).port)
        return ports

    def with_port_shift(self, shift: int) -> "SessionConfig":
        """Relocated copy for running sessions side by side."""
        return replace(
            self,
            detector_port=self.detector_port + shift,
            transformed_base=self.transformed_base + shift,
            command_base=self.command_base + shift,
            feed_port=self.feed_port + shift if self.feed_port else None,
        )


def config_from_dict(doc: dict) -> SessionConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a mapping")
    robots_doc = doc.get("robots")
    if not isinstance(robots_doc, list) or not robots_doc:
        raise ConfigError("robots: expected a non-empty list")
    robots = []
    for i, rd in enumerate(robots_doc):
        if not isinstance(rd, dict) or "id" not in rd or "role" not in rd or "chain" not in rd:
            raise ConfigError(f"robots[{i}]: requires id, role, chain")
        robots.append(
            RobotSpec(
                id=str(rd["id"]),
                role=str(rd["role"]),
                chain=str(rd["chain"]),
                side=str(rd.get("side", "right")),
                home=tuple(rd["home"]) if rd.get("home") else None,
            )
        )
    ik_doc = doc.get("ik", {})
    ik = IkSettings(
        damping=float(ik_doc.get("damping", 0.05)),
        max_iterations=int(ik_doc.get("max_iterations", 16)),
        tolerance=float(ik_doc.get("tolerance", 1e-3)),
        step_clamp=float(ik_doc.get("step_clamp", 0.2)),
        collision_margin=float(ik_doc.get("collision_margin", 0.005)),
    )
    known = {
        "rate", "source", "seed", "duration_s", "replay_log", "feed_port",
        "record_path", "record_format", "keypoint_log", "filter_window",
        "filter_alpha", "arm_scale", "detector_port", "transformed_base",
        "command_base",
    }
    extra = {k: v for k, v in doc.items() if k in known}
    return SessionConfig(robots=tuple(robots), ik=ik, **extra)


def load_config(path: str | Path) -> SessionConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(config: SessionConfig) -> dict:
    doc = {
        "rate": config.rate,
        "source": config.source,
        "seed": config.seed,
        "filter_window": config.filter_window,
        "filter_alpha": config.filter_alpha,
        "arm_scale": config.arm_scale,
        "detector_port": config.detector_port,
        "transformed_base": config.transformed_base,
        "command_base": config.command_base,
        "ik": {
            "damping": config.ik.damping,
            "max_iterations": config.ik.max_iterations,
            "tolerance": config.ik.tolerance,
            "step_clamp": config.ik.step_clamp,
            "collision_margin": config.ik.collision_margin,
        },
        "robots": [
            {
                "id": r.id,
                "role": r.role,
                "chain": r.chain,
                "side": r.side,
                **({"home": list(r.home)} if r.home else {}),
            }
            for r in config.robots
        ],
    }
    for key in ("duration_s", "replay_log", "feed_port", "record_path", "keypoint_log"):
        value = getattr(config, key)
        if value is not None:
            doc[key] = value
    if config.record_format != "parquet":
        doc["record_format"] = config.record_format
    return doc


# Canned configurations mirroring the evaluation matrix: single arm+hand at
# 30 Hz, the same pair at 90 Hz, and the bimanual four-robot variant.
def config_1(rate: float = 30.0, **overrides) -> SessionConfig:
    return SessionConfig(
        robots=(
            RobotSpec(id="arm_right", role="arm", chain="sim-xarm7", side="right"),
            RobotSpec(id="hand_right", role="hand", chain="sim-hand16", side="right"),
        ),
        rate=rate,
        **overrides,
    )


def config_2(**overrides) -> SessionConfig:
    return config_1(rate=90.0, **overrides)


def config_3(rate: float = 30.0, **overrides) -> SessionConfig:
    return SessionConfig(
        robots=(
            RobotSpec(id="arm_right", role="arm", chain="sim-xarm7", side="right"),
            RobotSpec(id="hand_right", role="hand", chain="sim-hand16", side="right"),
            RobotSpec(id="arm_left", role="arm", chain="sim-xarm7", side="left"),
            RobotSpec(id="hand_left", role="hand", chain="sim-hand16", side="left"),
        ),
        rate=rate,
        **overrides,
    )

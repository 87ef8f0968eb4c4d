"""Detector → operator → interface pipeline over netcore sockets."""
from .config import (
    ConfigError,
    RobotSpec,
    SessionConfig,
    config_1,
    config_2,
    config_3,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .detector import KeypointLogger, LoggedFrame, detector_run, load_keypoint_log
from .gateway import gateway_serve
from .hand_template import CURL_DEGREES, ScriptedHand, template_keypoints
from .messages import (
    COMMAND_KINDS,
    HAND_TARGET_MARKERS,
    TOPIC_BUTTON,
    TOPIC_COMMAND,
    TOPIC_LEFT,
    TOPIC_PAUSE,
    TOPIC_RIGHT,
    TOPIC_STATE,
    EndEffectorCommand,
    PayloadError,
    RobotState,
    SessionCommand,
    decode_command,
    decode_endeff,
    decode_keypoints,
    decode_state,
    encode_command,
    encode_endeff,
    encode_keypoints,
    encode_state,
    hand_topic,
    transformed_topic,
)
from .operator import OperatorCore, operator_run
from .pacing import RateLoop
from .policy import ScriptedPolicy, ThinkActReport, think_act_loop
from .robot import SimulatedRobot, home_state, interface_run, interface_step
from .session import (
    RobotSummary,
    SessionHandle,
    SessionReport,
    SessionStartupError,
    run_session,
    summarize_samples,
)

__all__ = [
    "COMMAND_KINDS",
    "CURL_DEGREES",
    "ConfigError",
    "EndEffectorCommand",
    "HAND_TARGET_MARKERS",
    "KeypointLogger",
    "LoggedFrame",
    "OperatorCore",
    "PayloadError",
    "RateLoop",
    "RobotSpec",
    "RobotState",
    "RobotSummary",
    "ScriptedHand",
    "ScriptedPolicy",
    "SessionCommand",
    "SessionConfig",
    "SessionHandle",
    "SessionReport",
    "SessionStartupError",
    "SimulatedRobot",
    "ThinkActReport",
    "TOPIC_BUTTON",
    "TOPIC_COMMAND",
    "TOPIC_LEFT",
    "TOPIC_PAUSE",
    "TOPIC_RIGHT",
    "TOPIC_STATE",
    "config_1",
    "config_2",
    "config_3",
    "config_from_dict",
    "config_to_dict",
    "decode_command",
    "decode_endeff",
    "decode_keypoints",
    "decode_state",
    "detector_run",
    "encode_command",
    "encode_endeff",
    "encode_keypoints",
    "encode_state",
    "gateway_serve",
    "hand_topic",
    "home_state",
    "interface_run",
    "interface_step",
    "load_config",
    "load_keypoint_log",
    "operator_run",
    "run_session",
    "summarize_samples",
    "template_keypoints",
    "think_act_loop",
    "transformed_topic",
]

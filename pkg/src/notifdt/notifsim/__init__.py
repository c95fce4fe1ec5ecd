from .config import FEATURE_INDEX, STATE_DIM, STATE_FEATURES, SimConfig
from .env import (
    R_CLICK,
    R_PENALTY,
    R_VISIT,
    REWARD_REALIZED,
    IneligibleActionError,
    SimEnv,
    tick_draws,
)
from .logio import LogFormatError, generate_logs, read_logs, write_logs
from .metrics import SESSION_GAP_MS, MetricsReport, sessions_metric
from .policies import BehaviorPolicy, ConstantPolicy, behavior_policy, heuristic_action
from .rollout import ABResult, MetricDelta, ab_compare, rollout

__all__ = [
    "ABResult",
    "BehaviorPolicy",
    "ConstantPolicy",
    "FEATURE_INDEX",
    "IneligibleActionError",
    "LogFormatError",
    "MetricDelta",
    "MetricsReport",
    "R_CLICK",
    "R_PENALTY",
    "R_VISIT",
    "REWARD_REALIZED",
    "SESSION_GAP_MS",
    "STATE_DIM",
    "STATE_FEATURES",
    "SimConfig",
    "SimEnv",
    "ab_compare",
    "behavior_policy",
    "generate_logs",
    "heuristic_action",
    "read_logs",
    "rollout",
    "sessions_metric",
    "tick_draws",
    "write_logs",
]

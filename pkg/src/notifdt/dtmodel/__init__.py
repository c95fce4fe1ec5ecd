from .config import (
    ACTIONS,
    DONT_SEND,
    N_ACTIONS,
    PAD_ACTION,
    REWARD_NAMES,
    SEND_BADGE,
    SEND_PUSH,
    ConfigError,
    DTConfig,
)
from .model import DecisionTransformer, HistoryStep, WindowBatch, collate
from .train import (
    TrainingDiverged,
    TrainingError,
    evaluate,
    rtg_label_percentiles,
    train_model,
)

__all__ = [
    "ACTIONS",
    "ConfigError",
    "DecisionTransformer",
    "DONT_SEND",
    "DTConfig",
    "HistoryStep",
    "N_ACTIONS",
    "PAD_ACTION",
    "REWARD_NAMES",
    "SEND_BADGE",
    "SEND_PUSH",
    "TrainingDiverged",
    "TrainingError",
    "WindowBatch",
    "collate",
    "evaluate",
    "rtg_label_percentiles",
    "train_model",
]

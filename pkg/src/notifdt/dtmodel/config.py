"""Model configuration and the discrete action vocabulary."""

from dataclasses import asdict, dataclass

import numpy as np

# Action indices are wire format: they appear in logs, datasets, buffer
# records, and checkpoints. Do not reorder.
ACTIONS = ("send_badge", "send_push", "dont_send")
SEND_BADGE, SEND_PUSH, DONT_SEND = 0, 1, 2
PAD_ACTION = 3  # embedding-table row for masked steps, never a real label
N_ACTIONS = 3

REWARD_NAMES = ("click_value", "visit", "volume_penalty")
# click_value is an upstream model prediction; the other two are observed
REWARD_REALIZED = (0, 1, 1)
# how late-arriving values merge into a pending record (visits accumulate)
REWARD_AGGREGATION = ("replace", "sum", "replace")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DTConfig:
    """Hyperparameters of the decision transformer.

    context_len is the number of steps the model attends over (4 tokens per
    step); horizon is the look-ahead used for return-to-go labels; grid is
    the sorted tuple of quantile levels the return head is trained on.
    """

    state_dim: int = 6
    context_len: int = 4
    horizon: int = 8
    gamma: float = 0.99
    rtg_loss_weight: float = 1.0
    n_rewards: int = 3
    grid: tuple = (0.25, 0.5, 0.75)
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    mlp_hidden: int = 128
    action_head_mode: str = "rtg"  # "rtg" or "state_rtg"
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(a) for a in self.grid))
        g = self.grid
        if not g or any(not (0.0 < a < 1.0) for a in g):
            raise ConfigError(f"quantile grid must lie in (0, 1): {g}")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError(f"quantile grid must be strictly increasing: {g}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.rtg_loss_weight < 0:
            raise ConfigError("rtg_loss_weight must be >= 0")
        if self.action_head_mode not in ("rtg", "state_rtg"):
            raise ConfigError(f"unknown action_head_mode {self.action_head_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")
        for name in ("state_dim", "context_len", "n_rewards", "d_model", "n_heads",
                     "n_layers", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")

    @property
    def n_quantiles(self):
        return len(self.grid)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid"] = tuple(d.get("grid", (0.25, 0.5, 0.75)))
        return cls(**d)

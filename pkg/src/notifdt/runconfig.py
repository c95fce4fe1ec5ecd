"""One structured config file drives every subcommand.

YAML with six blocks (simulator, pipeline, model, training, serving,
evaluation) plus run_dir. Unknown keys are rejected; values shared across
blocks (n_rewards, context length, horizon, gamma, state_dim) are
cross-checked. Overrides arrive as --block.key=value flags.
"""

import dataclasses
import os

import yaml

from .dtmodel.config import DTConfig
from .notifsim.config import STATE_DIM, SimConfig


class RunConfigError(ValueError):
    pass


_SIM_KEYS = {f.name for f in dataclasses.fields(SimConfig)}
_MODEL_KEYS = {f.name for f in dataclasses.fields(DTConfig)}

_DEFAULTS = {
    "run_dir": "runs/default",
    "simulator": {
        "n_users": 240,
        "n_steps": 60,
        "epsilon": 0.05,
        "seed": 7,
    },
    "pipeline": {
        "context_len": 4,
        "horizon": 8,
        "gamma": 0.99,
        "stride": 1,
        "pad_short": True,
        "split_ratio": 0.7,
        "split_seed": 3,
    },
    "model": {
        "d_model": 64,
        "n_heads": 2,
        "n_layers": 2,
        "mlp_hidden": 128,
        "grid": [0.25, 0.5, 0.75],
        "action_head_mode": "rtg",
        "rtg_loss_weight": 1.0,
        "seed": 1,
        "dtype": "float32",
    },
    "training": {
        "epochs": 10,
        "batch_size": 96,
        "learning_rate": 3e-3,
        "lr_decay": "cosine",
        "seed": 5,
        "loss_mode": "total",
    },
    "serving": {
        "capacity": 16,
        "ttl_days": 14,
        "host": "127.0.0.1",
        "port": 7401,
        "mode": "learned",
        "default_alphas": None,   # None -> 0.7 per reward
        "snapshot_dir": None,     # None -> <run_dir>/store
    },
    "evaluation": {
        "sweep_alphas": [0.5, 0.75, 0.95],
        "sweep_users": 250,
        "sweep_steps": 40,
        "sweep_seed": 99,
        "ab_seeds": [101, 102, 103],
        "ab_users": 120,
        "ab_steps": 40,
        "ab_bootstrap": 1000,
        "ab_epsilon": 0.05,
    },
}

_EXTRA_BLOCK_KEYS = {
    "simulator": {"n_users", "n_steps", "epsilon", "seed"},
    "model": {"context_len", "horizon", "gamma", "n_rewards", "state_dim"},
}


def _merge_block(name, defaults, user, allowed):
    merged = dict(defaults)
    for key, value in (user or {}).items():
        if key not in allowed:
            raise RunConfigError(f"unknown key {name}.{key}")
        merged[key] = value
    return merged


class RunConfig:
    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise RunConfigError("config root must be a mapping")
        unknown = set(raw) - set(_DEFAULTS)
        if unknown:
            raise RunConfigError(f"unknown top-level keys {sorted(unknown)}")

        self.run_dir = str(raw.get("run_dir", _DEFAULTS["run_dir"]))
        self.simulator = _merge_block(
            "simulator", _DEFAULTS["simulator"], raw.get("simulator"),
            _SIM_KEYS | _EXTRA_BLOCK_KEYS["simulator"],
        )
        self.pipeline = _merge_block(
            "pipeline", _DEFAULTS["pipeline"], raw.get("pipeline"),
            set(_DEFAULTS["pipeline"]),
        )
        self.model = _merge_block(
            "model", _DEFAULTS["model"], raw.get("model"),
            _MODEL_KEYS | _EXTRA_BLOCK_KEYS["model"],
        )
        self.training = _merge_block(
            "training", _DEFAULTS["training"], raw.get("training"),
            set(_DEFAULTS["training"]),
        )
        self.serving = _merge_block(
            "serving", _DEFAULTS["serving"], raw.get("serving"),
            set(_DEFAULTS["serving"]),
        )
        self.evaluation = _merge_block(
            "evaluation", _DEFAULTS["evaluation"], raw.get("evaluation"),
            set(_DEFAULTS["evaluation"]),
        )
        self._validate()

    def _validate(self):
        sim = self.sim_config()  # raises on bad generator params
        pl = self.pipeline
        if pl["context_len"] < 1 or pl["horizon"] < 0:
            raise RunConfigError("pipeline.context_len/horizon out of range")
        if not (0.0 <= pl["gamma"] <= 1.0):
            raise RunConfigError("pipeline.gamma must be in [0, 1]")
        # cross-block consistency: the model block may repeat shared values,
        # but they must agree with the pipeline/simulator blocks
        checks = {
            "context_len": pl["context_len"],
            "horizon": pl["horizon"],
            "gamma": pl["gamma"],
            "n_rewards": sim.n_rewards,
            "state_dim": STATE_DIM,
        }
        for key, want in checks.items():
            if key in self.model and self.model[key] != want:
                raise RunConfigError(
                    f"model.{key}={self.model[key]} disagrees with {want} "
                    "from the pipeline/simulator blocks"
                )
        try:
            self.dt_config()
        except Exception as exc:
            raise RunConfigError(f"bad model block: {exc}")
        if self.serving["capacity"] < 1 or self.serving["ttl_days"] <= 0:
            raise RunConfigError("serving.capacity/ttl_days out of range")
        if self.training["loss_mode"] not in ("total", "action", "rtg"):
            raise RunConfigError("training.loss_mode must be total/action/rtg")

    # -- materialized views ---------------------------------------------------

    def sim_config(self):
        kwargs = {k: v for k, v in self.simulator.items() if k in _SIM_KEYS}
        try:
            return SimConfig(**kwargs)
        except ValueError as exc:
            raise RunConfigError(f"bad simulator block: {exc}")

    def dt_config(self):
        kwargs = {k: v for k, v in self.model.items() if k in _MODEL_KEYS}
        kwargs.setdefault("context_len", self.pipeline["context_len"])
        kwargs.setdefault("horizon", self.pipeline["horizon"])
        kwargs.setdefault("gamma", self.pipeline["gamma"])
        kwargs.setdefault("n_rewards", self.sim_config().n_rewards)
        kwargs["state_dim"] = STATE_DIM
        kwargs["grid"] = tuple(kwargs.get("grid", (0.25, 0.5, 0.75)))
        return DTConfig(**kwargs)

    def resolved(self):
        return {
            "run_dir": self.run_dir,
            "simulator": self.simulator,
            "pipeline": self.pipeline,
            "model": self.model,
            "training": self.training,
            "serving": self.serving,
            "evaluation": self.evaluation,
        }

    def to_yaml(self):
        return yaml.safe_dump(self.resolved(), sort_keys=True)

    # -- run-directory layout --------------------------------------------------

    def path(self, *parts):
        return os.path.join(self.run_dir, *parts)

    @property
    def logs_file(self):
        return self.path("datasets", "logs.ndtlog")

    @property
    def train_file(self):
        return self.path("datasets", "train.ndtwin")

    @property
    def val_file(self):
        return self.path("datasets", "val.ndtwin")

    @property
    def checkpoint_file(self):
        return self.path("checkpoints", "model.ckpt")

    @property
    def metrics_file(self):
        return self.path("logs", "train_metrics.ndjson")

    @property
    def snapshot_dir(self):
        return self.serving["snapshot_dir"] or self.path("store")


def apply_overrides(raw, overrides):
    """Apply --block.key=value pairs; values parse as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise RunConfigError(f"override {item!r} is not of the form block.key=value")
        dotted, value = item.split("=", 1)
        dotted = dotted.lstrip("-")
        parts = dotted.split(".")
        if len(parts) == 1:
            raw[parts[0]] = yaml.safe_load(value)
            continue
        if len(parts) != 2:
            raise RunConfigError(f"override key {dotted!r} must be block.key")
        block, key = parts
        raw.setdefault(block, {})
        if not isinstance(raw[block], dict):
            raise RunConfigError(f"cannot override non-mapping block {block!r}")
        raw[block][key] = yaml.safe_load(value)
    return raw


def load_config(path, overrides=()):
    if not os.path.exists(path):
        raise RunConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise RunConfigError(f"config is not valid YAML: {exc}")
    raw = apply_overrides(raw, overrides)
    return RunConfig(raw)

import numpy as np
import pytest

from notifdt.dtmodel import DecisionTransformer, DTConfig, WindowBatch


def make_batch(cfg, b=2, seed=0, full_eas=True):
    """Random fully-real training batch for contract tests."""
    rng = np.random.default_rng(seed)
    t = cfg.context_len
    eas = np.ones((b, t, 3), dtype=np.uint8)
    if not full_eas:
        eas[:, :, 0] = rng.integers(0, 2, size=(b, t))
        eas[:, :, 1] = rng.integers(0, 2, size=(b, t))
    return WindowBatch(
        states=rng.normal(size=(b, t, cfg.state_dim)).astype(cfg.np_dtype),
        rtg=rng.normal(size=(b, t, cfg.n_rewards)).astype(cfg.np_dtype),
        actions=rng.integers(0, 3, size=(b, t)).astype(np.int64),
        rewards=rng.normal(size=(b, t, cfg.n_rewards)).astype(cfg.np_dtype),
        eas=eas,
        step_real=np.ones((b, t), dtype=np.uint8),
    )


@pytest.fixture(scope="session")
def tiny_cfg():
    return DTConfig(
        state_dim=6, context_len=4, horizon=2, d_model=16, n_heads=2,
        n_layers=2, mlp_hidden=24, n_rewards=3, seed=3, dtype="float64",
    )


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    return DecisionTransformer(tiny_cfg)

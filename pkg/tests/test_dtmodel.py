"""Tokenization layout, causality, EAS gating, losses, training contracts."""

import numpy as np
import pytest

from notifdt.diffcore import Adam, backward, zero_grad
from notifdt.dtmodel import (
    DONT_SEND,
    ConfigError,
    DecisionTransformer,
    DTConfig,
    TrainingDiverged,
    TrainingError,
    train_model,
)
from notifdt.dtmodel.config import PAD_ACTION
from notifdt.dtmodel.model import TOKENS_PER_STEP

from conftest import make_batch


class TestConfig:
    def test_default_grid_is_quartiles(self):
        assert DTConfig().grid == (0.25, 0.5, 0.75)

    def test_grid_must_increase(self):
        with pytest.raises(ConfigError, match="increasing"):
            DTConfig(grid=(0.5, 0.5, 0.75))
        with pytest.raises(ConfigError, match="in \\(0, 1\\)"):
            DTConfig(grid=(0.0, 0.5))

    def test_heads_divide_width(self):
        with pytest.raises(ConfigError, match="divisible"):
            DTConfig(d_model=30, n_heads=4)

    def test_roundtrip_dict(self):
        cfg = DTConfig(grid=(0.1, 0.9), action_head_mode="state_rtg")
        assert DTConfig.from_dict(cfg.to_dict()) == cfg


class TestTokenLayout:
    def test_step_token_order_and_count(self, tiny_model, tiny_cfg):
        batch = make_batch(tiny_cfg, b=1, seed=0)
        tokens, allowed = tiny_model.embed_trajectory(batch)
        t = tiny_cfg.context_len
        assert tokens.data.shape == (1, TOKENS_PER_STEP * t, tiny_cfg.d_model)
        assert allowed.shape == (1, 4 * t, 4 * t)

    def test_within_step_token_order_is_s_r_a_r(self):
        # a 3-step window yields 12 tokens; each field of step k lands at
        # token 4k + (0 for state, 1 for RTG, 2 for action, 3 for reward)
        cfg = DTConfig(state_dim=6, context_len=3, horizon=2, d_model=16,
                       n_heads=2, n_layers=1, mlp_hidden=24, seed=3,
                       dtype="float64")
        model = DecisionTransformer(cfg)
        base = make_batch(cfg, b=1, seed=21)
        t0 = model.embed_trajectory(base)[0].data
        assert t0.shape[1] == 12
        offsets = {"states": 0, "rtg": 1, "actions": 2, "rewards": 3}
        for field, off in offsets.items():
            for k in range(cfg.context_len):
                poked = make_batch(cfg, b=1, seed=21)
                if field == "actions":
                    poked.actions[0, k] = (poked.actions[0, k] + 1) % 3
                else:
                    getattr(poked, field)[0, k] += 1.0
                t1 = model.embed_trajectory(poked)[0].data
                changed = np.flatnonzero(np.abs(t1 - t0).sum(axis=-1)[0])
                assert changed.tolist() == [4 * k + off], (field, k)

    def test_state_perturbation_touches_one_token(self, tiny_model, tiny_cfg):
        # windows identical except one step's state differ only in that
        # state token's embedding row
        base = make_batch(tiny_cfg, b=1, seed=1)
        poked = make_batch(tiny_cfg, b=1, seed=1)
        k = 2
        poked.states[0, k] += 1.0
        t0 = tiny_model.embed_trajectory(base)[0].data
        t1 = tiny_model.embed_trajectory(poked)[0].data
        diff = np.abs(t0 - t1).sum(axis=-1)[0]
        expected = np.zeros(4 * tiny_cfg.context_len)
        changed = diff > 0
        assert changed[TOKENS_PER_STEP * k]
        expected[TOKENS_PER_STEP * k] = 1
        np.testing.assert_array_equal(changed.astype(int), expected)

    def test_all_pad_window_fully_masked(self, tiny_model, tiny_cfg):
        batch = make_batch(tiny_cfg, b=1, seed=2)
        batch.step_real[:] = 0
        batch.actions[:] = PAD_ACTION
        tokens, allowed = tiny_model.embed_trajectory(batch)
        assert tokens.data.shape[1] == 4 * tiny_cfg.context_len
        off_diag = allowed[0] - np.diag(np.diag(allowed[0]))
        assert off_diag.sum() == 0  # pads only reach themselves

    def test_reward_dim_mismatch_rejected(self, tiny_model, tiny_cfg):
        batch = make_batch(tiny_cfg, b=1, seed=3)
        batch.rtg = batch.rtg[:, :, :2]
        batch.rewards = batch.rewards[:, :, :2]
        with pytest.raises(Exception, match="reward dimensionality"):
            tiny_model.embed_trajectory(batch)


class TestCausality:
    def _outputs(self, model, batch):
        h_s, h_r = model.hidden_states(batch)
        q = model.predict_quantiles(h_s).data
        logits = model.predict_action_logits(h_s, h_r, batch.eas).data
        return q, logits

    def test_quantiles_ignore_current_rtg_action_reward(self, tiny_model, tiny_cfg):
        base = make_batch(tiny_cfg, b=1, seed=4)
        q0, _ = self._outputs(tiny_model, base)
        for field in ("rtg", "actions", "rewards"):
            poked = make_batch(tiny_cfg, b=1, seed=4)
            t = 2
            if field == "actions":
                poked.actions[0, t] = (poked.actions[0, t] + 1) % 3
            else:
                getattr(poked, field)[0, t] += 3.0
            q1, _ = self._outputs(tiny_model, poked)
            np.testing.assert_array_equal(q1[0, : t + 1], q0[0, : t + 1])

    def test_action_logits_ignore_current_action_reward_but_see_rtg(
        self, tiny_model, tiny_cfg
    ):
        base = make_batch(tiny_cfg, b=1, seed=5)
        _, l0 = self._outputs(tiny_model, base)
        t = 1
        for field in ("actions", "rewards"):
            poked = make_batch(tiny_cfg, b=1, seed=5)
            if field == "actions":
                poked.actions[0, t] = (poked.actions[0, t] + 1) % 3
            else:
                poked.rewards[0, t] += 3.0
            _, l1 = self._outputs(tiny_model, poked)
            np.testing.assert_array_equal(l1[0, : t + 1], l0[0, : t + 1])
        poked = make_batch(tiny_cfg, b=1, seed=5)
        poked.rtg[0, t] += 3.0
        _, l1 = self._outputs(tiny_model, poked)
        assert not np.array_equal(l1[0, t], l0[0, t])  # prompt conditions action

    def test_future_steps_do_not_leak(self, tiny_model, tiny_cfg):
        base = make_batch(tiny_cfg, b=1, seed=6)
        q0, l0 = self._outputs(tiny_model, base)
        t = 1
        poked = make_batch(tiny_cfg, b=1, seed=6)
        poked.states[0, t + 1 :] += 2.0
        poked.rtg[0, t + 1 :] -= 1.0
        poked.actions[0, t + 1 :] = DONT_SEND
        q1, l1 = self._outputs(tiny_model, poked)
        np.testing.assert_array_equal(q1[0, : t + 1], q0[0, : t + 1])
        np.testing.assert_array_equal(l1[0, : t + 1], l0[0, : t + 1])


class TestActionHead:
    def test_singleton_eas_forces_action(self, tiny_cfg):
        for seed in range(5):
            model = DecisionTransformer(
                DTConfig(**{**tiny_cfg.to_dict(), "seed": seed})
            )
            batch = make_batch(tiny_cfg, b=1, seed=seed)
            batch.eas[:] = 0
            batch.eas[:, :, DONT_SEND] = 1
            h_s, h_r = model.hidden_states(batch)
            logits = model.predict_action_logits(h_s, h_r, batch.eas).data
            assert (np.argmax(logits, axis=-1) == DONT_SEND).all()

    def test_excluded_action_has_probability_zero(self, tiny_model, tiny_cfg):
        batch = make_batch(tiny_cfg, b=1, seed=7)
        batch.eas[:, :, 1] = 0  # exclude send_push
        h_s, h_r = tiny_model.hidden_states(batch)
        logits = tiny_model.predict_action_logits(h_s, h_r, batch.eas).data
        row = logits[0, 0]
        p = np.exp(row - row[np.isfinite(row)].max())
        p = p / p.sum()
        assert p[1] == 0.0

    def test_gating_is_active(self, tiny_model, tiny_cfg):
        # same hidden, different eligibility embedding -> different logits
        batch_a = make_batch(tiny_cfg, b=1, seed=8)
        batch_b = make_batch(tiny_cfg, b=1, seed=8)
        batch_b.eas[:, :, 0] = 0
        h_s, h_r = tiny_model.hidden_states(batch_a)
        la = tiny_model.predict_action_logits(h_s, h_r, batch_a.eas).data
        lb = tiny_model.predict_action_logits(h_s, h_r, batch_b.eas).data
        assert not np.allclose(la[0, :, 2], lb[0, :, 2])

    def test_empty_eas_rejected(self, tiny_model, tiny_cfg):
        batch = make_batch(tiny_cfg, b=1, seed=9)
        batch.eas[0, 1] = 0
        h_s, h_r = tiny_model.hidden_states(batch)
        with pytest.raises(ValueError, match="nonempty"):
            tiny_model.predict_action_logits(h_s, h_r, batch.eas)


class TestLosses:
    def test_perfect_prediction_zero_loss(self, tiny_model, tiny_cfg):
        from notifdt.diffcore import ops

        batch = make_batch(tiny_cfg, b=1, seed=10)
        t = tiny_cfg.context_len
        logits = np.full((1, t, 3), -1e4)
        for k in range(t):
            logits[0, k, batch.actions[0, k]] = 1e4
        loss = tiny_model.loss_action(ops.constant(logits), batch)
        assert float(loss.data) == 0.0

    def test_uniform_logits_loss_is_t_ln3(self, tiny_model, tiny_cfg):
        from notifdt.diffcore import ops

        batch = make_batch(tiny_cfg, b=1, seed=11)
        t = tiny_cfg.context_len
        loss = tiny_model.loss_action(ops.constant(np.zeros((1, t, 3))), batch)
        assert abs(float(loss.data) - t * np.log(3.0)) < 1e-12

    def test_masked_step_equals_shorter_window(self, tiny_model, tiny_cfg):
        from notifdt.diffcore import ops

        batch = make_batch(tiny_cfg, b=1, seed=12)
        t = tiny_cfg.context_len
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(1, t, 3))
        full = float(tiny_model.loss_action(ops.constant(logits), batch).data)
        batch.step_real[0, 0] = 0  # mask the first step
        masked = float(tiny_model.loss_action(ops.constant(logits), batch).data)
        # masked loss equals the sum over the remaining T-1 steps
        p = np.exp(logits[0, 0] - logits[0, 0].max())
        p /= p.sum()
        dropped = -np.log(p[batch.actions[0, 0]])
        assert abs(full - masked - dropped) < 1e-9

    def test_rtg_loss_zero_at_labels(self, tiny_model, tiny_cfg):
        from notifdt.diffcore import ops

        batch = make_batch(tiny_cfg, b=1, seed=13)
        m = tiny_cfg.n_quantiles
        q = np.repeat(batch.rtg[..., None], m, axis=-1)
        loss = tiny_model.loss_rtg(ops.constant(q), batch)
        assert float(loss.data) == 0.0

    def test_total_loss_affine_in_lambda(self, tiny_cfg):
        base = tiny_cfg.to_dict()
        batch = make_batch(tiny_cfg, b=2, seed=14)
        vals = {}
        for lam in (0.0, 1.0, 2.5):
            model = DecisionTransformer(DTConfig(**{**base, "rtg_loss_weight": lam}))
            total, parts = model.loss(batch)
            vals[lam] = (float(total.data), parts)
        l_act = vals[0.0][1]["loss_action"]
        assert vals[0.0][0] == pytest.approx(l_act, rel=1e-12)
        slope = vals[1.0][1]["loss_rtg"]
        assert vals[1.0][0] == pytest.approx(l_act + slope, rel=1e-12)
        assert vals[2.5][0] == pytest.approx(l_act + 2.5 * slope, rel=1e-12)

    def test_lambda_scales_quantile_head_gradient(self, tiny_cfg):
        batch = make_batch(tiny_cfg, b=2, seed=15)
        base = tiny_cfg.to_dict()

        def qhead_grads(lam, loss_mode):
            model = DecisionTransformer(DTConfig(**{**base, "rtg_loss_weight": lam}))
            zero_grad(model.parameters())
            total, _ = model.loss(batch, loss_mode)
            backward(total)
            return {
                n: p.grad.copy() for n, p in model.params.items()
                if n.startswith("qhead.") and p.grad is not None
            }

        g_total = qhead_grads(2.0, "total")
        g_rtg = qhead_grads(2.0, "rtg")
        assert set(g_total) == set(g_rtg)
        for name in g_total:
            np.testing.assert_allclose(g_total[name], 2.0 * g_rtg[name], rtol=1e-9)

    def test_modes_share_quantile_predictions(self, tiny_cfg):
        base = tiny_cfg.to_dict()
        m_r = DecisionTransformer(DTConfig(**{**base, "action_head_mode": "rtg"}))
        m_sr = DecisionTransformer(
            DTConfig(**{**base, "action_head_mode": "state_rtg"})
        )
        # equal parameters for all shared layers
        for name, p in m_r.params.items():
            if name in m_sr.params and p.data.shape == m_sr.params[name].data.shape:
                m_sr.params[name].data = p.data.copy()
        assert m_sr.params["ahead.h.w"].data.shape[0] == 2 * tiny_cfg.d_model
        batch = make_batch(tiny_cfg, b=1, seed=16)
        q_r = m_r.predict_quantiles(m_r.hidden_states(batch)[0]).data
        q_sr = m_sr.predict_quantiles(m_sr.hidden_states(batch)[0]).data
        np.testing.assert_array_equal(q_r, q_sr)

    def test_no_state_or_reward_heads_exist(self, tiny_model):
        assert not any(
            n.split(".")[0] in ("shead", "rhead", "state_head", "reward_head")
            for n in tiny_model.params
        )


class TestTraining:
    def test_empty_dataset_rejected(self, tiny_cfg):
        with pytest.raises(TrainingError, match="empty"):
            train_model([], tiny_cfg)

    def test_overfit_single_batch(self, tiny_cfg):
        cfg = DTConfig(**{**tiny_cfg.to_dict(), "dtype": "float32", "seed": 0})
        model = DecisionTransformer(cfg)
        batch = make_batch(cfg, b=8, seed=17)
        opt = Adam(model.parameters(), lr=1.5e-3)
        losses = []
        for step in range(200):
            parts = model.train_step(batch, opt)
            if (step + 1) % 20 == 0:
                losses.append(parts["loss_total"])
        assert len(losses) == 10
        assert all(b < a for a, b in zip(losses, losses[1:])), losses
        h_s, h_r = model.hidden_states(batch)
        logits = model.predict_action_logits(h_s, h_r, batch.eas).data
        assert (np.argmax(logits, axis=-1) == batch.actions).all()

    def test_identical_seeds_identical_checkpoints(self, tmp_path, tiny_cfg):
        from notifdt.pipeline import TrajectoryWindow

        rng = np.random.default_rng(18)
        cfg = DTConfig(**{**tiny_cfg.to_dict(), "dtype": "float32"})
        t = cfg.context_len
        windows = []
        for i in range(24):
            windows.append(TrajectoryWindow(
                user_id=f"u{i:02d}", start=0,
                states=rng.normal(size=(t, cfg.state_dim)),
                rtg=rng.normal(size=(t, cfg.n_rewards)),
                actions=rng.integers(0, 3, size=t).astype(np.int64),
                rewards=rng.normal(size=(t, cfg.n_rewards)),
                eas=np.ones((t, 3), dtype=np.uint8),
                timestamps=np.arange(1, t + 1, dtype=np.int64),
                step_real=np.ones(t, dtype=np.uint8),
            ))
        paths = []
        for run in range(2):
            model, _ = train_model(windows, cfg, epochs=2, batch_size=8, seed=9)
            path = tmp_path / f"run{run}.ckpt"
            model.save(path, {"k": "v"})
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]

    def test_divergence_aborts_with_diagnostic(self, tiny_cfg):
        from notifdt.pipeline import TrajectoryWindow

        cfg = DTConfig(**{**tiny_cfg.to_dict(), "dtype": "float32"})
        rng = np.random.default_rng(19)
        t = cfg.context_len
        windows = [TrajectoryWindow(
            user_id="u0", start=0,
            states=rng.normal(size=(t, cfg.state_dim)) * 100,
            rtg=rng.normal(size=(t, cfg.n_rewards)) * 1e30,
            actions=rng.integers(0, 3, size=t).astype(np.int64),
            rewards=rng.normal(size=(t, cfg.n_rewards)),
            eas=np.ones((t, 3), dtype=np.uint8),
            timestamps=np.arange(1, t + 1, dtype=np.int64),
            step_real=np.ones(t, dtype=np.uint8),
        )]
        with pytest.raises((TrainingDiverged, Exception)):
            train_model(windows, cfg, epochs=3, batch_size=1, lr=1e6)


class TestCheckpoint:
    def test_model_roundtrip(self, tmp_path, tiny_model, tiny_cfg):
        path = tmp_path / "model.ckpt"
        tiny_model.save(path, {"model_key": "k1", "constant_prompt": [1, 2, 3]})
        loaded, extras = DecisionTransformer.load(path)
        assert extras["model_key"] == "k1"
        assert loaded.cfg == tiny_cfg
        batch = make_batch(tiny_cfg, b=1, seed=20)
        q0 = tiny_model.predict_quantiles(tiny_model.hidden_states(batch)[0]).data
        q1 = loaded.predict_quantiles(loaded.hidden_states(batch)[0]).data
        np.testing.assert_array_equal(q0, q1)

"""The decision transformer.

Each step contributes four tokens in the fixed order (state, return-to-go,
action, reward). A causal trunk runs over the interleaved sequence; the
return-quantile head reads the trunk output at the *state* token (which sees
exactly the history plus the current state, never the current step's RTG,
action, or reward), and the action head reads the output at the RTG token
(so the action conditions on the prompt). Short windows are left-padded and
masked out of attention and both losses.
"""

from dataclasses import dataclass

import numpy as np

from ..diffcore import backward, ops, read_checkpoint, write_checkpoint
from .config import DONT_SEND, N_ACTIONS, PAD_ACTION, DTConfig

TOKENS_PER_STEP = 4  # (s, R, a, r)


@dataclass
class WindowBatch:
    """Dense training arrays; pad steps have step_real == 0."""

    states: np.ndarray    # (B, T, state_dim)
    rtg: np.ndarray       # (B, T, n_r)
    actions: np.ndarray   # (B, T) int64, PAD_ACTION on pad steps
    rewards: np.ndarray   # (B, T, n_r)
    eas: np.ndarray       # (B, T, 3) uint8
    step_real: np.ndarray  # (B, T) uint8

    @property
    def size(self):
        return self.states.shape[0]

    def slice(self, idx):
        return WindowBatch(
            self.states[idx], self.rtg[idx], self.actions[idx],
            self.rewards[idx], self.eas[idx], self.step_real[idx],
        )


def collate(windows, cfg):
    """Stack pipeline TrajectoryWindows into one WindowBatch."""
    dt = cfg.np_dtype
    b, t = len(windows), cfg.context_len
    batch = WindowBatch(
        states=np.zeros((b, t, cfg.state_dim), dtype=dt),
        rtg=np.zeros((b, t, cfg.n_rewards), dtype=dt),
        actions=np.full((b, t), PAD_ACTION, dtype=np.int64),
        rewards=np.zeros((b, t, cfg.n_rewards), dtype=dt),
        eas=np.zeros((b, t, N_ACTIONS), dtype=np.uint8),
        step_real=np.zeros((b, t), dtype=np.uint8),
    )
    for i, w in enumerate(windows):
        real = w.step_real.astype(bool)
        batch.states[i] = w.states
        batch.rtg[i] = w.rtg
        batch.actions[i][real] = w.actions[real]
        batch.rewards[i] = w.rewards
        batch.eas[i] = w.eas
        batch.step_real[i] = w.step_real
    return batch


def _attention_mask(step_real, n_steps):
    """(B, L, L) uint8: causal, pad tokens excluded as keys, diagonal kept."""
    b = step_real.shape[0]
    l = TOKENS_PER_STEP * n_steps
    causal = np.tril(np.ones((l, l), dtype=np.uint8))
    key_real = np.repeat(step_real.astype(np.uint8), TOKENS_PER_STEP, axis=1)
    allowed = causal[None, :, :] * key_real[:, None, :]
    di = np.arange(l)
    allowed[:, di, di] = 1  # pad queries still need one allowed key
    return np.ascontiguousarray(allowed)


class DecisionTransformer:
    def __init__(self, cfg: DTConfig, params=None):
        self.cfg = cfg
        self.params = params if params is not None else self._init_params()

    # -- parameters ---------------------------------------------------------

    def _init_params(self):
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        dt = cfg.np_dtype
        params = {}

        def p(name, shape, fan_in=None, zero=False, one=False):
            if zero:
                data = np.zeros(shape, dtype=dt)
            elif one:
                data = np.ones(shape, dtype=dt)
            else:
                std = 1.0 / np.sqrt(fan_in if fan_in else shape[0])
                data = rng.normal(0.0, std, size=shape).astype(dt)
            params[name] = ops.param(data, name)

        d, nr, m = cfg.d_model, cfg.n_rewards, cfg.n_quantiles
        p("embed.state.w", (cfg.state_dim, d), fan_in=cfg.state_dim)
        p("embed.state.b", (d,), zero=True)
        p("embed.rtg.w", (nr, d), fan_in=nr)
        p("embed.rtg.b", (d,), zero=True)
        p("embed.reward.w", (nr, d), fan_in=nr)
        p("embed.reward.b", (d,), zero=True)
        p("embed.action", (PAD_ACTION + 1, d), fan_in=d)
        p("embed.pos", (cfg.context_len, d), fan_in=d)
        for i in range(cfg.n_layers):
            pre = f"layer{i}."
            p(pre + "ln1.gamma", (d,), one=True)
            p(pre + "ln1.beta", (d,), zero=True)
            for nm in ("wq", "wk", "wv", "wo"):
                p(pre + "attn." + nm, (d, d), fan_in=d)
            for nm in ("bq", "bk", "bv", "bo"):
                p(pre + "attn." + nm, (d,), zero=True)
            p(pre + "ln2.gamma", (d,), one=True)
            p(pre + "ln2.beta", (d,), zero=True)
            p(pre + "ffn.w1", (d, cfg.mlp_hidden), fan_in=d)
            p(pre + "ffn.b1", (cfg.mlp_hidden,), zero=True)
            p(pre + "ffn.w2", (cfg.mlp_hidden, d), fan_in=cfg.mlp_hidden)
            p(pre + "ffn.b2", (d,), zero=True)
        p("ln_f.gamma", (d,), one=True)
        p("ln_f.beta", (d,), zero=True)
        p("qhead.w1", (d, cfg.mlp_hidden), fan_in=d)
        p("qhead.b1", (cfg.mlp_hidden,), zero=True)
        p("qhead.w2", (cfg.mlp_hidden, nr * m), fan_in=cfg.mlp_hidden)
        p("qhead.b2", (nr * m,), zero=True)
        gate_in = 2 * d if cfg.action_head_mode == "state_rtg" else d
        p("ahead.h.w", (gate_in, d), fan_in=gate_in)
        p("ahead.h.b", (d,), zero=True)
        p("ahead.eas.w", (N_ACTIONS, d), fan_in=N_ACTIONS)
        p("ahead.eas.b", (d,), zero=True)
        p("ahead.out.w", (d, N_ACTIONS), fan_in=d)
        p("ahead.out.b", (N_ACTIONS,), zero=True)
        return params

    def parameters(self):
        return list(self.params.values())

    def quantile_parameters(self):
        return [t for n, t in self.params.items() if n.startswith("qhead.")]

    # -- forward ------------------------------------------------------------

    def embed_trajectory(self, batch):
        """Token tensor (B, 4T, d) in (s, R, a, r) step order, plus the mask."""
        cfg = self.cfg
        b, t = batch.step_real.shape
        if batch.rtg.shape[-1] != cfg.n_rewards or batch.rewards.shape[-1] != cfg.n_rewards:
            raise ops.ShapeError(
                f"embed_trajectory: reward dimensionality "
                f"{batch.rtg.shape[-1]} != n_rewards {cfg.n_rewards}"
            )
        if t > cfg.context_len:
            raise ops.ShapeError(
                f"embed_trajectory: {t} steps exceed context_len {cfg.context_len}"
            )
        P = self.params
        dt = cfg.np_dtype
        s_e = ops.add_bias(ops.matmul(ops.constant(batch.states, dt), P["embed.state.w"]),
                           P["embed.state.b"])
        r_e = ops.add_bias(ops.matmul(ops.constant(batch.rtg, dt), P["embed.rtg.w"]),
                           P["embed.rtg.b"])
        a_e = ops.gather_rows(P["embed.action"], batch.actions)
        w_e = ops.add_bias(ops.matmul(ops.constant(batch.rewards, dt), P["embed.reward.w"]),
                           P["embed.reward.b"])
        pos_idx = np.broadcast_to(np.arange(t), (b, t))
        pos = ops.gather_rows(P["embed.pos"], pos_idx)
        streams = [ops.add(s, pos) for s in (s_e, r_e, a_e, w_e)]
        tokens = ops.interleave_steps(streams)
        return tokens, _attention_mask(batch.step_real, t)

    def trunk(self, tokens, allowed):
        cfg = self.cfg
        P = self.params
        x = tokens
        for i in range(cfg.n_layers):
            pre = f"layer{i}."
            h = ops.layernorm(x, P[pre + "ln1.gamma"], P[pre + "ln1.beta"])
            att = ops.multihead_attention(
                h,
                P[pre + "attn.wq"], P[pre + "attn.bq"],
                P[pre + "attn.wk"], P[pre + "attn.bk"],
                P[pre + "attn.wv"], P[pre + "attn.bv"],
                P[pre + "attn.wo"], P[pre + "attn.bo"],
                cfg.n_heads, allowed,
            )
            x = ops.add(x, att)
            h = ops.layernorm(x, P[pre + "ln2.gamma"], P[pre + "ln2.beta"])
            ff = ops.add_bias(ops.matmul(h, P[pre + "ffn.w1"]), P[pre + "ffn.b1"])
            ff = ops.add_bias(ops.matmul(ops.gelu(ff), P[pre + "ffn.w2"]),
                              P[pre + "ffn.b2"])
            x = ops.add(x, ff)
        return ops.layernorm(x, P["ln_f.gamma"], P["ln_f.beta"])

    def hidden_states(self, batch):
        """Trunk outputs at the state and RTG token of every step: (B, T, d) each."""
        tokens, allowed = self.embed_trajectory(batch)
        h = self.trunk(tokens, allowed)
        t = batch.step_real.shape[1]
        idx_s = TOKENS_PER_STEP * np.arange(t)
        h_s = ops.gather_axis1(h, idx_s)
        h_r = ops.gather_axis1(h, idx_s + 1)
        return h_s, h_r

    def predict_quantiles(self, h_s):
        """Quantile matrix (B, T, n_r, M) from state-token hiddens."""
        cfg = self.cfg
        P = self.params
        z = ops.add_bias(ops.matmul(h_s, P["qhead.w1"]), P["qhead.b1"])
        flat = ops.add_bias(ops.matmul(ops.gelu(z), P["qhead.w2"]), P["qhead.b2"])
        b, t = flat.data.shape[0], flat.data.shape[1]
        return ops.reshape(flat, (b, t, cfg.n_rewards, cfg.n_quantiles))

    def predict_action_logits(self, h_s, h_r, eas):
        """EAS-gated logits (B, T, 3); ineligible actions hard-masked to -inf."""
        cfg = self.cfg
        P = self.params
        if eas.shape[-1] != N_ACTIONS or not eas.any(axis=-1).all():
            raise ValueError("eligible action set must be a nonempty subset per step")
        g_in = ops.concat_last([h_s, h_r]) if cfg.action_head_mode == "state_rtg" else h_r
        u = ops.add_bias(ops.matmul(g_in, P["ahead.h.w"]), P["ahead.h.b"])
        e = ops.add_bias(
            ops.matmul(ops.constant(eas.astype(cfg.np_dtype)), P["ahead.eas.w"]),
            P["ahead.eas.b"],
        )
        z = ops.mul(u, e)
        logits = ops.add_bias(ops.matmul(z, P["ahead.out.w"]), P["ahead.out.b"])
        hard = np.where(eas.astype(bool), 0.0, -np.inf).astype(cfg.np_dtype)
        return ops.add_const(logits, hard)

    # -- losses -------------------------------------------------------------

    def loss_action(self, logits, batch):
        """Mean over windows of the per-trajectory cross-entropy sum."""
        b, t = batch.step_real.shape
        targets = np.where(batch.step_real.astype(bool), batch.actions, 0)
        weight = batch.step_real.astype(self.cfg.np_dtype) / b
        return ops.cross_entropy_sum(
            ops.reshape(logits, (b * t, N_ACTIONS)),
            targets.reshape(-1),
            weight.reshape(-1),
        )

    def loss_rtg(self, qpred, batch):
        """Mean over windows of the triple pinball sum (steps x rewards x levels)."""
        cfg = self.cfg
        b, t = batch.step_real.shape
        nr, m = cfg.n_rewards, cfg.n_quantiles
        target = np.repeat(batch.rtg[..., None], m, axis=-1)
        alpha = np.broadcast_to(np.asarray(cfg.grid, dtype=cfg.np_dtype), (b, t, nr, m))
        weight = np.broadcast_to(
            (batch.step_real.astype(cfg.np_dtype) / b)[:, :, None, None], (b, t, nr, m)
        )
        return ops.pinball_sum(
            ops.reshape(qpred, (-1,)),
            target.reshape(-1),
            np.ascontiguousarray(alpha).reshape(-1),
            np.ascontiguousarray(weight).reshape(-1),
        )

    def loss(self, batch, loss_mode="total"):
        """Returns (loss tensor, parts dict of floats)."""
        h_s, h_r = self.hidden_states(batch)
        parts = {}
        if loss_mode in ("total", "action"):
            logits = self.predict_action_logits(h_s, h_r, batch.eas)
            l_act = self.loss_action(logits, batch)
            parts["loss_action"] = float(l_act.data)
        if loss_mode in ("total", "rtg"):
            qpred = self.predict_quantiles(h_s)
            l_rtg = self.loss_rtg(qpred, batch)
            parts["loss_rtg"] = float(l_rtg.data)
        if loss_mode == "action":
            total = l_act
        elif loss_mode == "rtg":
            total = l_rtg
        else:
            total = ops.add(l_act, ops.scale(l_rtg, self.cfg.rtg_loss_weight))
        parts["loss_total"] = float(total.data)
        return total, parts

    def train_step(self, batch, optimizer, loss_mode="total"):
        optimizer.zero_grad()
        total, parts = self.loss(batch, loss_mode)
        backward(total)
        optimizer.step()
        return parts

    # -- inference ----------------------------------------------------------

    def _inference_batch(self, history, state, rtg_prompt=None):
        """Left-padded single-window batch; current step is the last one."""
        cfg = self.cfg
        t = cfg.context_len
        dt = cfg.np_dtype
        hist = list(history)[-(t - 1):] if t > 1 else []
        n_hist = len(hist)
        pad = t - 1 - n_hist
        batch = WindowBatch(
            states=np.zeros((1, t, cfg.state_dim), dtype=dt),
            rtg=np.zeros((1, t, cfg.n_rewards), dtype=dt),
            actions=np.full((1, t), PAD_ACTION, dtype=np.int64),
            rewards=np.zeros((1, t, cfg.n_rewards), dtype=dt),
            eas=np.zeros((1, t, N_ACTIONS), dtype=np.uint8),
            step_real=np.zeros((1, t), dtype=np.uint8),
        )
        for j, step in enumerate(hist):
            k = pad + j
            batch.states[0, k] = step.state
            batch.rtg[0, k] = step.rtg
            batch.actions[0, k] = step.action
            batch.rewards[0, k] = step.reward
            batch.step_real[0, k] = 1
        batch.states[0, t - 1] = state
        batch.step_real[0, t - 1] = 1
        batch.eas[0, :, DONT_SEND] = 1  # placeholder; real EAS applies at the head
        if rtg_prompt is not None:
            batch.rtg[0, t - 1] = rtg_prompt
        return batch, n_hist

    def quantiles_for_state(self, history, state):
        """Q-hat for the current step: (n_r, M), conditioned on history + state only."""
        batch, _ = self._inference_batch(history, state)
        t = self.cfg.context_len
        tokens, allowed = self.embed_trajectory(batch)
        keep = TOKENS_PER_STEP * (t - 1) + 1  # ...through the current state token
        h = self.trunk(
            ops.gather_axis1(tokens, np.arange(keep)),
            np.ascontiguousarray(allowed[:, :keep, :keep]),
        )
        h_s = ops.gather_axis1(h, np.array([keep - 1]))
        q = self.predict_quantiles(h_s)
        return q.data[0, 0].astype(np.float64)

    def action_for_state(self, history, state, rtg_prompt, eas):
        """Masked logits and probabilities (3,) for the current step."""
        batch, _ = self._inference_batch(history, state, rtg_prompt)
        t = self.cfg.context_len
        tokens, allowed = self.embed_trajectory(batch)
        keep = TOKENS_PER_STEP * (t - 1) + 2  # ...through the current RTG token
        h = self.trunk(
            ops.gather_axis1(tokens, np.arange(keep)),
            np.ascontiguousarray(allowed[:, :keep, :keep]),
        )
        h_s = ops.gather_axis1(h, np.array([keep - 2]))
        h_r = ops.gather_axis1(h, np.array([keep - 1]))
        eas_arr = np.asarray(eas, dtype=np.uint8).reshape(1, 1, N_ACTIONS)
        logits = self.predict_action_logits(h_s, h_r, eas_arr)
        row = logits.data[0, 0].astype(np.float64)
        finite = np.where(np.isfinite(row), row, -np.inf)
        shifted = np.exp(finite - finite[np.isfinite(finite)].max())
        probs = shifted / shifted.sum()
        return row, probs

    # -- persistence --------------------------------------------------------

    def save(self, path, extras=None):
        config = {"dt": self.cfg.to_dict(), "extras": extras or {}}
        tensors = {name: t.data for name, t in self.params.items()}
        write_checkpoint(path, tensors, config)

    @classmethod
    def load(cls, path):
        tensors, config = read_checkpoint(path)
        cfg = DTConfig.from_dict(config["dt"])
        params = {name: ops.param(arr, name) for name, arr in tensors.items()}
        model = cls(cfg, params=params)
        return model, config.get("extras", {})


@dataclass
class HistoryStep:
    """One completed step as replayed at inference time."""

    state: np.ndarray
    rtg: np.ndarray      # the prompt used (or label, when replaying logs)
    action: int
    reward: np.ndarray

"""Differentiable operations on the tape.

Enough surface for a small causal transformer: dense layers, embeddings,
layer normalization, masked softmax, causal self-attention, GELU, and the
two losses (cross-entropy, pinball). Loss reductions return 0-d float64
tensors regardless of the compute dtype.
"""

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, accumulate_grad, constant, param  # noqa: F401


def _out(data, parents, bwd):
    t = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if t.requires_grad:
        t._parents = tuple(parents)
        t._bwd = bwd
    return t


def _check(cond, op, msg):
    if not cond:
        raise ShapeError(f"{op}: {msg}")


def matmul(x, w):
    """x (..., D) @ w (D, K)."""
    _check(w.data.ndim == 2, "matmul", f"weight must be 2-D, got {w.data.shape}")
    _check(
        x.data.shape[-1] == w.data.shape[0],
        "matmul",
        f"inner dims differ: {x.data.shape} @ {w.data.shape}",
    )
    data = x.data @ w.data

    def bwd(g):
        accumulate_grad(x, g @ w.data.T)
        xf = x.data.reshape(-1, x.data.shape[-1])
        gf = g.reshape(-1, g.shape[-1])
        accumulate_grad(w, xf.T @ gf)

    return _out(data, (x, w), bwd)


def bmm(a, b):
    """Batched (B, L, D) @ (B, D, K)."""
    _check(
        a.data.ndim == 3 and b.data.ndim == 3 and a.data.shape[0] == b.data.shape[0],
        "bmm",
        f"need matching 3-D batches: {a.data.shape} @ {b.data.shape}",
    )
    _check(
        a.data.shape[2] == b.data.shape[1],
        "bmm",
        f"inner dims differ: {a.data.shape} @ {b.data.shape}",
    )
    data = a.data @ b.data

    def bwd(g):
        accumulate_grad(a, g @ b.data.swapaxes(1, 2))
        accumulate_grad(b, a.data.swapaxes(1, 2) @ g)

    return _out(data, (a, b), bwd)


def add(x, y):
    _check(x.data.shape == y.data.shape, "add", f"{x.data.shape} vs {y.data.shape}")

    def bwd(g):
        accumulate_grad(x, g)
        accumulate_grad(y, g)

    return _out(x.data + y.data, (x, y), bwd)


def add_bias(x, b):
    """Broadcast a (D,) bias over the last axis."""
    _check(
        b.data.ndim == 1 and x.data.shape[-1] == b.data.shape[0],
        "add_bias",
        f"bias {b.data.shape} does not fit {x.data.shape}",
    )

    def bwd(g):
        accumulate_grad(x, g)
        accumulate_grad(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _out(x.data + b.data, (x, b), bwd)


def mul(x, y):
    _check(x.data.shape == y.data.shape, "mul", f"{x.data.shape} vs {y.data.shape}")

    def bwd(g):
        accumulate_grad(x, g * y.data)
        accumulate_grad(y, g * x.data)

    return _out(x.data * y.data, (x, y), bwd)


def scale(x, c):
    c = float(c)

    def bwd(g):
        accumulate_grad(x, g * c)

    return _out(x.data * c, (x,), bwd)


def add_const(x, m):
    """Add a constant array (no gradient path through ``m``).

    Used for additive -inf masks on logits; gradients flow to ``x`` only.
    """
    m = np.asarray(m)
    data = x.data + m
    _check(data.shape == x.data.shape, "add_const", "mask must not broadcast x up")

    def bwd(g):
        accumulate_grad(x, g)

    return _out(data, (x,), bwd)


def reshape(x, shape):
    data = x.data.reshape(shape)

    def bwd(g):
        accumulate_grad(x, g.reshape(x.data.shape))

    return _out(data, (x,), bwd)


def transpose(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        accumulate_grad(x, g.transpose(inv))

    return _out(x.data.transpose(axes), (x,), bwd)


def concat_last(xs):
    widths = [t.data.shape[-1] for t in xs]
    data = np.concatenate([t.data for t in xs], axis=-1)

    def bwd(g):
        off = 0
        for t, w in zip(xs, widths):
            accumulate_grad(t, g[..., off : off + w])
            off += w

    return _out(data, tuple(xs), bwd)


def gather_rows(table, idx):
    """Embedding lookup: table (V, D), idx int (...,) -> (..., D)."""
    idx = np.asarray(idx)
    _check(table.data.ndim == 2, "gather_rows", "table must be 2-D")
    _check(
        idx.min(initial=0) >= 0 and idx.max(initial=-1) < table.data.shape[0],
        "gather_rows",
        "index out of range",
    )
    data = table.data[idx]

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx.reshape(-1), g.reshape(-1, g.shape[-1]))
        accumulate_grad(table, dt)

    return _out(data, (table,), bwd)


def gather_axis1(x, idx):
    """x (B, L, D) -> (B, len(idx), D), duplicate indices allowed."""
    idx = np.asarray(idx)
    _check(x.data.ndim == 3, "gather_axis1", "input must be 3-D")
    data = x.data[:, idx, :]

    def bwd(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (slice(None), idx), g)
        accumulate_grad(x, dx)

    return _out(data, (x,), bwd)


def interleave_steps(streams):
    """k streams of (B, T, D) -> (B, k*T, D) with step-major token order.

    Output position k*t + i holds stream i's step t, i.e. per-step token
    groups (s_t, R_t, a_t, r_t) when called with the four token streams.
    """
    k = len(streams)
    b, t, d = streams[0].data.shape
    for s in streams:
        _check(s.data.shape == (b, t, d), "interleave_steps", "streams must match")
    data = np.stack([s.data for s in streams], axis=2).reshape(b, k * t, d)

    def bwd(g):
        gs = g.reshape(b, t, k, d)
        for i, s in enumerate(streams):
            accumulate_grad(s, gs[:, :, i, :])

    return _out(data, tuple(streams), bwd)


def layernorm(x, gamma, beta, eps=1e-5):
    d = x.data.shape[-1]
    _check(
        gamma.data.shape == (d,) and beta.data.shape == (d,),
        "layernorm",
        f"gamma/beta must be ({d},)",
    )
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    y2, mean, rstd = kernels.layernorm_forward(x2, gamma.data, beta.data, float(eps))

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(-1, d))
        dx, dgamma, dbeta = kernels.layernorm_backward(
            g2, x2, gamma.data, mean, rstd
        )
        accumulate_grad(x, dx.reshape(x.data.shape))
        accumulate_grad(gamma, dgamma)
        accumulate_grad(beta, dbeta)

    return _out(y2.reshape(x.data.shape), (x, gamma, beta), bwd)


def gelu(x):
    flat = np.ascontiguousarray(x.data.reshape(-1))
    y = kernels.gelu_forward(flat)

    def bwd(g):
        dx = kernels.gelu_backward(flat, np.ascontiguousarray(g.reshape(-1)))
        accumulate_grad(x, dx.reshape(x.data.shape))

    return _out(y.reshape(x.data.shape), (x,), bwd)


def masked_softmax(x, allowed):
    """Softmax over the last axis; entries where ``allowed`` is 0 get p=0.

    Every row must keep at least one allowed entry.
    """
    allowed = np.ascontiguousarray(
        np.asarray(allowed, dtype=np.uint8).reshape(-1, x.data.shape[-1])
    )
    _check(
        allowed.shape[0] == int(np.prod(x.data.shape[:-1], dtype=np.int64)),
        "masked_softmax",
        "mask shape does not match input",
    )
    _check(allowed.any(axis=1).all(), "masked_softmax", "a row has no allowed entry")
    x2 = np.ascontiguousarray(x.data.reshape(allowed.shape))
    p = kernels.masked_softmax_forward(x2, allowed)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(p.shape))
        ds = kernels.masked_softmax_backward(g2, p)
        accumulate_grad(x, ds.reshape(x.data.shape))

    return _out(p.reshape(x.data.shape), (x,), bwd)


def cross_entropy_sum(logits, targets, weight):
    """Weighted sum over rows of -log softmax(logits)[target].

    logits (N, C) may contain -inf from hard eligibility masks; targets must
    point at finite entries. Returns a 0-d float64 tensor.
    """
    _check(logits.data.ndim == 2, "cross_entropy_sum", "logits must be (N, C)")
    targets = np.ascontiguousarray(np.asarray(targets, dtype=np.int64))
    weight = np.ascontiguousarray(np.asarray(weight, dtype=logits.data.dtype))
    _check(
        targets.shape == (logits.data.shape[0],) and weight.shape == targets.shape,
        "cross_entropy_sum",
        "targets/weight must be (N,)",
    )
    l2 = np.ascontiguousarray(logits.data)
    loss, probs = kernels.softmax_xent_forward(l2, targets, weight)

    def bwd(g):
        dl = kernels.softmax_xent_backward(probs, targets, weight, float(g))
        accumulate_grad(logits, dl)

    return _out(np.float64(loss), (logits,), bwd)


def pinball_sum(pred, target, alpha, weight):
    """Weighted sum of pinball losses rho_alpha(pred, target), flat inputs.

    The alpha branch is taken when target >= pred (ties included), so the
    subgradient at the kink is -alpha.
    """
    p = np.ascontiguousarray(pred.data.reshape(-1))
    t = np.ascontiguousarray(np.asarray(target, dtype=p.dtype).reshape(-1))
    a = np.ascontiguousarray(np.asarray(alpha, dtype=p.dtype).reshape(-1))
    w = np.ascontiguousarray(np.asarray(weight, dtype=p.dtype).reshape(-1))
    _check(
        t.shape == p.shape and a.shape == p.shape and w.shape == p.shape,
        "pinball_sum",
        "pred/target/alpha/weight must have equal sizes",
    )
    loss = kernels.pinball_forward(p, t, a, w)

    def bwd(g):
        dp = kernels.pinball_backward(p, t, a, w, float(g))
        accumulate_grad(pred, dp.reshape(pred.data.shape))

    return _out(np.float64(loss), (pred,), bwd)


def sum_all(x):
    def bwd(g):
        accumulate_grad(x, np.full_like(x.data, float(g)))

    return _out(np.float64(x.data.sum(dtype=np.float64)), (x,), bwd)


def multihead_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, n_heads, allowed):
    """Causal self-attention block (projections + masked softmax + output map).

    x: (B, L, D); allowed: (B, L, L) uint8, 1 where query position q may
    attend to key position k (the causal structure and any padding live in
    this mask).
    """
    b, l, d = x.data.shape
    _check(d % n_heads == 0, "multihead_attention", "D must divide by n_heads")
    dh = d // n_heads

    def split_heads(t):
        return reshape(transpose(reshape(t, (b, l, n_heads, dh)), (0, 2, 1, 3)),
                       (b * n_heads, l, dh))

    q = split_heads(add_bias(matmul(x, wq), bq))
    k = split_heads(add_bias(matmul(x, wk), bk))
    v = split_heads(add_bias(matmul(x, wv), bv))

    scores = scale(bmm(q, transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
    allowed_bh = np.repeat(np.asarray(allowed, dtype=np.uint8), n_heads, axis=0)
    probs = masked_softmax(scores, allowed_bh)
    ctx = bmm(probs, v)
    ctx = reshape(transpose(reshape(ctx, (b, n_heads, l, dh)), (0, 2, 1, 3)), (b, l, d))
    return add_bias(matmul(ctx, wo), bo)

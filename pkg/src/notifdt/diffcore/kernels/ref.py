"""Reference numpy implementations of the fused kernels.

Every function here has a compiled twin in ``_speedups.pyx`` with the same
signature and the same formulas; the two backends must agree to float
rounding. All 2-D inputs are C-contiguous, dtype float32 or float64, and
loss reductions accumulate in float64 regardless of the input dtype.
"""

import numpy as np

GELU_C = float(np.sqrt(2.0 / np.pi))
GELU_A = 0.044715


def layernorm_forward(x, gamma, beta, eps):
    # x: (N, D) -> (y, mean, rstd); biased variance, matching np.var
    mean = x.mean(axis=1, keepdims=True)
    var = np.square(x - mean).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = (x - mean) * rstd
    y = xhat * gamma + beta
    return y, mean[:, 0], rstd[:, 0]


def layernorm_backward(dy, x, gamma, mean, rstd):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgamma, dbeta


def masked_softmax_forward(scores, allowed):
    # allowed: uint8 (N, C); disallowed entries get probability exactly 0.
    # Every row must have at least one allowed entry.
    neg = np.array(-np.inf, dtype=scores.dtype)
    masked = np.where(allowed.astype(bool), scores, neg)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_backward(dprobs, probs):
    inner = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def gelu_forward(x):
    # tanh approximation; the one nonlinearity used throughout the model
    t = np.tanh(GELU_C * (x + GELU_A * x**3))
    return 0.5 * x * (1.0 + t)


def gelu_backward(x, dy):
    t = np.tanh(GELU_C * (x + GELU_A * x**3))
    dinner = GELU_C * (1.0 + 3.0 * GELU_A * x**2)
    dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
    return dy * dx


def pinball_forward(pred, target, alpha, weight):
    # rho_alpha(pred, target) with the alpha branch taken when target >= pred
    d = target.astype(np.float64) - pred.astype(np.float64)
    a = alpha.astype(np.float64)
    per = np.where(d >= 0.0, a * d, (a - 1.0) * d)
    return float((per * weight.astype(np.float64)).sum())


def pinball_backward(pred, target, alpha, weight, dloss):
    d = target - pred
    slope = np.where(d >= 0.0, -alpha, 1.0 - alpha)
    return (slope * weight * np.asarray(dloss, dtype=pred.dtype)).astype(
        pred.dtype, copy=False
    )


def softmax_xent_forward(logits, targets, weight):
    # logits may contain -inf (hard-masked classes); exp(-inf) == 0 exactly.
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    n = logits.shape[0]
    p_true = probs[np.arange(n), targets]
    with np.errstate(divide="ignore"):
        nll = -np.log(p_true.astype(np.float64))
    loss = float((nll * weight.astype(np.float64)).sum())
    return loss, probs


def softmax_xent_backward(probs, targets, weight, dloss):
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits *= (weight * np.asarray(dloss, dtype=probs.dtype))[:, None]
    return dlogits

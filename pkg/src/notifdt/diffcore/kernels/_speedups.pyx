# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused kernels; signature-compatible with kernels.ref.

Single pass per row, no temporaries. Loss reductions accumulate in double
precision, matching the reference backend's contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh, INFINITY

ctypedef fused real:
    float
    double

cdef double GELU_C = sqrt(2.0 / 3.14159265358979323846)
cdef double GELU_A = 0.044715


def layernorm_forward(real[:, ::1] x, real[::1] gamma, real[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    y_arr = np.empty((n, d), dtype=dt)
    mean_arr = np.empty(n, dtype=dt)
    rstd_arr = np.empty(n, dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef real[::1] mean = mean_arr
    cdef real[::1] rstd = rstd_arr
    cdef double acc, var, mu, rs
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += x[i, j]
        mu = acc / d
        acc = 0.0
        for j in range(d):
            acc += (x[i, j] - mu) * (x[i, j] - mu)
        var = acc / d
        rs = 1.0 / sqrt(var + eps)
        mean[i] = <real> mu
        rstd[i] = <real> rs
        for j in range(d):
            y[i, j] = <real> ((x[i, j] - mu) * rs * gamma[j] + beta[j])
    return y_arr, mean_arr, rstd_arr


def layernorm_backward(real[:, ::1] dy, real[:, ::1] x, real[::1] gamma,
                       real[::1] mean, real[::1] rstd):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    dx_arr = np.empty((n, d), dtype=dt)
    dgamma_arr = np.zeros(d, dtype=dt)
    dbeta_arr = np.zeros(d, dtype=dt)
    cdef real[:, ::1] dx = dx_arr
    cdef real[::1] dgamma = dgamma_arr
    cdef real[::1] dbeta = dbeta_arr
    cdef double m1, m2, xhat, dxh, mu, rs
    for i in range(n):
        mu = mean[i]
        rs = rstd[i]
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mu) * rs
            dxh = dy[i, j] * gamma[j]
            dgamma[j] += <real> (dy[i, j] * xhat)
            dbeta[j] += dy[i, j]
            m1 += dxh
            m2 += dxh * xhat
        m1 /= d
        m2 /= d
        for j in range(d):
            xhat = (x[i, j] - mu) * rs
            dxh = dy[i, j] * gamma[j]
            dx[i, j] = <real> ((dxh - m1 - xhat * m2) * rs)
    return dx_arr, dgamma_arr, dbeta_arr


def masked_softmax_forward(real[:, ::1] scores, cnp.uint8_t[:, ::1] allowed):
    cdef Py_ssize_t n = scores.shape[0], c = scores.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    p_arr = np.empty((n, c), dtype=dt)
    cdef real[:, ::1] p = p_arr
    cdef double m, z, e
    for i in range(n):
        m = -INFINITY
        for j in range(c):
            if allowed[i, j] and scores[i, j] > m:
                m = scores[i, j]
        z = 0.0
        for j in range(c):
            if allowed[i, j]:
                e = exp(scores[i, j] - m)
            else:
                e = 0.0
            p[i, j] = <real> e
            z += e
        for j in range(c):
            p[i, j] = <real> (p[i, j] / z)
    return p_arr


def masked_softmax_backward(real[:, ::1] dprobs, real[:, ::1] probs):
    cdef Py_ssize_t n = probs.shape[0], c = probs.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    ds_arr = np.empty((n, c), dtype=dt)
    cdef real[:, ::1] ds = ds_arr
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(c):
            inner += dprobs[i, j] * probs[i, j]
        for j in range(c):
            ds[i, j] = <real> (probs[i, j] * (dprobs[i, j] - inner))
    return ds_arr


def gelu_forward(real[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    dt = np.float32 if real is float else np.float64
    y_arr = np.empty(n, dtype=dt)
    cdef real[::1] y = y_arr
    cdef double t, v
    for i in range(n):
        v = x[i]
        t = tanh(GELU_C * (v + GELU_A * v * v * v))
        y[i] = <real> (0.5 * v * (1.0 + t))
    return y_arr


def gelu_backward(real[::1] x, real[::1] dy):
    cdef Py_ssize_t n = x.shape[0], i
    dt = np.float32 if real is float else np.float64
    dx_arr = np.empty(n, dtype=dt)
    cdef real[::1] dx = dx_arr
    cdef double t, v, dinner
    for i in range(n):
        v = x[i]
        t = tanh(GELU_C * (v + GELU_A * v * v * v))
        dinner = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
        dx[i] = <real> (dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner))
    return dx_arr


def pinball_forward(real[::1] pred, real[::1] target, real[::1] alpha,
                    real[::1] weight):
    cdef Py_ssize_t n = pred.shape[0], i
    cdef double loss = 0.0, d
    for i in range(n):
        d = <double> target[i] - <double> pred[i]
        if d >= 0.0:
            loss += alpha[i] * d * weight[i]
        else:
            loss += (alpha[i] - 1.0) * d * weight[i]
    return loss


def pinball_backward(real[::1] pred, real[::1] target, real[::1] alpha,
                     real[::1] weight, double dloss):
    cdef Py_ssize_t n = pred.shape[0], i
    dt = np.float32 if real is float else np.float64
    dp_arr = np.empty(n, dtype=dt)
    cdef real[::1] dp = dp_arr
    cdef double d, slope
    for i in range(n):
        d = <double> target[i] - <double> pred[i]
        if d >= 0.0:
            slope = -alpha[i]
        else:
            slope = 1.0 - alpha[i]
        dp[i] = <real> (slope * weight[i] * dloss)
    return dp_arr


def softmax_xent_forward(real[:, ::1] logits, cnp.int64_t[::1] targets,
                         real[::1] weight):
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    p_arr = np.empty((n, c), dtype=dt)
    cdef real[:, ::1] p = p_arr
    cdef double m, z, e, loss = 0.0
    for i in range(n):
        m = -INFINITY
        for j in range(c):
            if logits[i, j] > m:
                m = logits[i, j]
        z = 0.0
        for j in range(c):
            e = exp(logits[i, j] - m)
            p[i, j] = <real> e
            z += e
        for j in range(c):
            p[i, j] = <real> (p[i, j] / z)
        loss += -log(<double> p[i, targets[i]]) * weight[i]
    return loss, p_arr


def softmax_xent_backward(real[:, ::1] probs, cnp.int64_t[::1] targets,
                          real[::1] weight, double dloss):
    cdef Py_ssize_t n = probs.shape[0], c = probs.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    dl_arr = np.empty((n, c), dtype=dt)
    cdef real[:, ::1] dl = dl_arr
    cdef double w
    for i in range(n):
        w = weight[i] * dloss
        for j in range(c):
            dl[i, j] = <real> (probs[i, j] * w)
        dl[i, targets[i]] -= <real> w
    return dl_arr

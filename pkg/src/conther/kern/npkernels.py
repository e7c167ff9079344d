"""Vectorized numpy implementations of the hot kernels.

This is the fallback backend: same signatures and numerics as the
compiled module in cykernels.pyx. All arrays are C-contiguous float64;
row-wise kernels take 2-D views whose last axis is the normalized one.
"""

import numpy as np


def softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    e /= e.sum(axis=1, keepdims=True)
    return e


def softmax_rows_grad(s, gout):
    dot = (s * gout).sum(axis=1, keepdims=True)
    return s * (gout - dot)


def layernorm_rows(x, gain, bias, eps):
    """Row-wise layer norm with the variance floored at eps.

    Returns (out, xhat, rstd, clamped). Flooring (rather than adding eps)
    keeps already-normalized rows exactly unit variance; a zero-variance
    row normalizes to zeros without error.
    """
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1)
    clamped = (var < eps).view(np.uint8)
    rstd = 1.0 / np.sqrt(np.maximum(var, eps))
    xhat = (x - mu) * rstd[:, None]
    out = xhat * gain + bias
    return out, xhat, rstd, clamped


def layernorm_rows_grad(xhat, rstd, clamped, gain, gout):
    gy = gout * gain
    gy_mean = gy.mean(axis=1, keepdims=True)
    proj = (gy * xhat).mean(axis=1, keepdims=True)
    proj[clamped != 0] = 0.0  # rstd is constant for clamped rows
    gx = rstd[:, None] * (gy - gy_mean - xhat * proj)
    ggain = (gout * xhat).sum(axis=0)
    gbias = gout.sum(axis=0)
    return gx, ggain, gbias


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_grad(x, gout):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    out *= gout
    return out


def tanh_grad(y, gout):
    return (1.0 - y * y) * gout


def adam_update(p, g, m, v, t, lr, b1, b2, eps):
    """One fused Adam step, in place on p, m, v. t is the 1-based step count."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)

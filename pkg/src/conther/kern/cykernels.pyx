# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in npkernels.py.

Single fused pass per row instead of numpy's one temporary per step;
numerics are identical to the fallback. Keep both files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt

cnp.import_array()


def softmax_rows(double[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    out_arr = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, n):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(n):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(n):
            out[i, j] /= s
    return out_arr


def softmax_rows_grad(double[:, ::1] s, double[:, ::1] gout):
    cdef Py_ssize_t rows = s.shape[0], n = s.shape[1]
    gin_arr = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] gin = gin_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(n):
            dot += s[i, j] * gout[i, j]
        for j in range(n):
            gin[i, j] = s[i, j] * (gout[i, j] - dot)
    return gin_arr


def layernorm_rows(double[:, ::1] x, double[::1] gain, double[::1] bias, double eps):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    out_arr = np.empty((rows, n), dtype=np.float64)
    xhat_arr = np.empty((rows, n), dtype=np.float64)
    rstd_arr = np.empty(rows, dtype=np.float64)
    clamped_arr = np.empty(rows, dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef cnp.uint8_t[::1] clamped = clamped_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, d, r
    for i in range(rows):
        mu = 0.0
        for j in range(n):
            mu += x[i, j]
        mu /= n
        var = 0.0
        for j in range(n):
            d = x[i, j] - mu
            var += d * d
        var /= n
        clamped[i] = 1 if var < eps else 0
        r = 1.0 / sqrt(var if var >= eps else eps)
        rstd[i] = r
        for j in range(n):
            d = (x[i, j] - mu) * r
            xhat[i, j] = d
            out[i, j] = d * gain[j] + bias[j]
    return out_arr, xhat_arr, rstd_arr, clamped_arr


def layernorm_rows_grad(double[:, ::1] xhat, double[::1] rstd,
                        cnp.uint8_t[::1] clamped, double[::1] gain,
                        double[:, ::1] gout):
    cdef Py_ssize_t rows = xhat.shape[0], n = xhat.shape[1]
    gx_arr = np.empty((rows, n), dtype=np.float64)
    ggain_arr = np.zeros(n, dtype=np.float64)
    gbias_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] ggain = ggain_arr
    cdef double[::1] gbias = gbias_arr
    cdef Py_ssize_t i, j
    cdef double gy, gy_mean, proj, r
    for i in range(rows):
        gy_mean = 0.0
        proj = 0.0
        for j in range(n):
            gy = gout[i, j] * gain[j]
            gy_mean += gy
            proj += gy * xhat[i, j]
            ggain[j] += gout[i, j] * xhat[i, j]
            gbias[j] += gout[i, j]
        gy_mean /= n
        proj /= n
        if clamped[i]:
            proj = 0.0  # rstd is constant for clamped rows
        r = rstd[i]
        for j in range(n):
            gy = gout[i, j] * gain[j]
            gx[i, j] = r * (gy - gy_mean - xhat[i, j] * proj)
    return gx_arr, ggain_arr, gbias_arr


def softplus(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = x[i]
        out[i] = (v if v > 0.0 else 0.0) + log1p(exp(-fabs(v)))
    return out_arr


def softplus_grad(double[::1] x, double[::1] gout):
    cdef Py_ssize_t n = x.shape[0]
    gin_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] gin = gin_arr
    cdef Py_ssize_t i
    cdef double v, e
    for i in range(n):
        v = x[i]
        if v >= 0.0:
            gin[i] = gout[i] / (1.0 + exp(-v))
        else:
            e = exp(v)
            gin[i] = gout[i] * e / (1.0 + e)
    return gin_arr


def tanh_grad(double[::1] y, double[::1] gout):
    cdef Py_ssize_t n = y.shape[0]
    gin_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] gin = gin_arr
    cdef Py_ssize_t i
    for i in range(n):
        gin[i] = (1.0 - y[i] * y[i]) * gout[i]
    return gin_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long t, double lr, double b1, double b2, double eps):
    """One fused Adam step, in place on p, m, v. t is the 1-based step count."""
    cdef Py_ssize_t n = p.shape[0]
    cdef double c1 = 1.0 - b1**t
    cdef double c2 = 1.0 - b2**t
    cdef Py_ssize_t i
    cdef double mhat, vhat
    for i in range(n):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i])
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for convolution, max pooling and batch normalisation.

im2col/col2im and non-overlapping max pooling accumulate in the same
per-element order as ``_kernels_py``, so both backends agree bit for bit on
those paths. The batch-norm kernels reduce in double precision.
"""
import numpy as np

from cython cimport floating
from libc.math cimport sqrt


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad,
           int oh, int ow):
    """Rows are output positions (n, i, j); columns are (c, ki, kj)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ni, i, j, ci, ki, kj, row, col, y, x0
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cdef floating[:, :, :, ::1] xp = padded
    out = np.empty((n * oh * ow, c * kh * kw), np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] cols = out
    with nogil:
        for ni in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (ni * oh + i) * ow + j
                    x0 = j * stride
                    col = 0
                    for ci in range(c):
                        for ki in range(kh):
                            y = i * stride + ki
                            for kj in range(kw):
                                cols[row, col] = xp[ni, ci, y, x0 + kj]
                                col += 1
    return out


def col2im(floating[:, ::1] cols, int n, int c, int h, int w, int kh, int kw,
           int stride, int pad, int oh, int ow):
    cdef Py_ssize_t ni, i, j, ci, ki, kj, row, col, y, x0
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad),
                   np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] dx = out
    with nogil:
        for ni in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (ni * oh + i) * ow + j
                    x0 = j * stride
                    col = 0
                    for ci in range(c):
                        for ki in range(kh):
                            y = i * stride + ki
                            for kj in range(kw):
                                dx[ni, ci, y, x0 + kj] += cols[row, col]
                                col += 1
    if pad:
        return np.ascontiguousarray(out[:, :, pad:pad + h, pad:pad + w])
    return out


def maxpool_forward(floating[:, :, :, ::1] x, int k, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1, ow = (w - k) // stride + 1
    cdef Py_ssize_t ni, ci, i, j, ki, kj, best_idx
    cdef floating best, v
    out = np.empty((n, c, oh, ow), np.float32 if floating is float else np.float64)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = out
    cdef long long[:, :, :, ::1] a = arg
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(oh):
                    for j in range(ow):
                        best = x[ni, ci, i * stride, j * stride]
                        best_idx = 0
                        for ki in range(k):
                            for kj in range(k):
                                v = x[ni, ci, i * stride + ki, j * stride + kj]
                                if v > best:
                                    best = v
                                    best_idx = ki * k + kj
                        y[ni, ci, i, j] = best
                        a[ni, ci, i, j] = best_idx
    return out, arg


def maxpool_backward(floating[:, :, :, ::1] g, long long[:, :, :, ::1] arg,
                     int h, int w, int k, int stride):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1]
    cdef Py_ssize_t oh = g.shape[2], ow = g.shape[3]
    cdef Py_ssize_t ni, ci, i, j, idx
    out = np.zeros((n, c, h, w), np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] dx = out
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(oh):
                    for j in range(ow):
                        idx = arg[ni, ci, i, j]
                        dx[ni, ci, i * stride + idx // k, j * stride + idx % k] += g[ni, ci, i, j]
    return out


def bn_stats(floating[:, :, ::1] x):
    """Per-channel mean and biased variance of an [N, C, L] array (two-pass, double accumulators)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], l = x.shape[2]
    cdef Py_ssize_t ni, ci, li
    cdef double s, d, m = n * l
    mean = np.zeros(c, np.float64)
    var = np.zeros(c, np.float64)
    cdef double[::1] mu = mean, va = var
    with nogil:
        for ci in range(c):
            s = 0
            for ni in range(n):
                for li in range(l):
                    s += x[ni, ci, li]
            mu[ci] = s / m
            s = 0
            for ni in range(n):
                for li in range(l):
                    d = x[ni, ci, li] - mu[ci]
                    s += d * d
            va[ci] = s / m
    return mean, var


def bn_forward(floating[:, :, ::1] x, floating[::1] shift, floating[::1] inv_std,
               floating[::1] gamma, floating[::1] beta):
    """xhat = (x - shift) * inv_std and y = xhat * gamma + beta, per channel."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], l = x.shape[2]
    cdef Py_ssize_t ni, ci, li
    cdef floating v
    xhat_arr = np.empty((n, c, l), np.float32 if floating is float else np.float64)
    y_arr = np.empty((n, c, l), np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] xh = xhat_arr
    cdef floating[:, :, ::1] y = y_arr
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for li in range(l):
                    v = (x[ni, ci, li] - shift[ci]) * inv_std[ci]
                    xh[ni, ci, li] = v
                    y[ni, ci, li] = v * gamma[ci] + beta[ci]
    return xhat_arr, y_arr


def bn_backward(floating[:, :, ::1] g, floating[:, :, ::1] xhat, floating[::1] gamma,
                floating[::1] inv_std, bint need_x):
    """Train-mode batch-norm gradients: (dx or None, dgamma, dbeta)."""
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], l = g.shape[2]
    cdef Py_ssize_t ni, ci, li
    cdef double sg, sgx, m = n * l
    cdef floating scale, fm, fsg, fsgx
    dgamma_arr = np.empty(c, np.float32 if floating is float else np.float64)
    dbeta_arr = np.empty(c, np.float32 if floating is float else np.float64)
    cdef floating[::1] dgamma = dgamma_arr, dbeta = dbeta_arr
    dx_arr = np.empty((n, c, l), np.float32 if floating is float else np.float64) if need_x else None
    cdef floating[:, :, ::1] dx
    if need_x:
        dx = dx_arr
    with nogil:
        for ci in range(c):
            sg = 0
            sgx = 0
            for ni in range(n):
                for li in range(l):
                    sg += g[ni, ci, li]
                    sgx += g[ni, ci, li] * xhat[ni, ci, li]
            dbeta[ci] = <floating>sg
            dgamma[ci] = <floating>sgx
            if need_x:
                fm = <floating>m
                fsg = <floating>sg
                fsgx = <floating>sgx
                scale = gamma[ci] * inv_std[ci] / fm
                for ni in range(n):
                    for li in range(l):
                        dx[ni, ci, li] = scale * (fm * g[ni, ci, li] - fsg - xhat[ni, ci, li] * fsgx)
    return dx_arr, dgamma_arr, dbeta_arr

"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, pad, oh, ow):
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, oh, ow, c, kh, kw), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride]
            cols[..., ki, kj] = patch.transpose(0, 2, 3, 1)
    return cols.reshape(n * oh * ow, c * kh * kw)


def col2im(cols, n, c, h, w, kh, kw, stride, pad, oh, ow):
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    c6 = cols.reshape(n, oh, ow, c, kh, kw)
    # descending offsets reproduce the compiled kernel's row-major accumulation order
    for ki in reversed(range(kh)):
        for kj in reversed(range(kw)):
            xp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += (
                c6[..., ki, kj].transpose(0, 3, 1, 2))
    if pad:
        return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
    return xp


def maxpool_forward(x, k, stride):
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(win.shape[:4] + (k * k,))
    # np.argmax returns the first maximum, i.e. row-major tie-break
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(g, arg, h, w, k, stride):
    n, c, oh, ow = g.shape
    dx = np.zeros((n, c, h, w), dtype=g.dtype)
    if stride < k:
        # overlapping windows: add in output order so sums round like the compiled kernel
        rows = np.arange(oh).reshape(1, 1, oh, 1) * stride + arg // k
        cols = np.arange(ow).reshape(1, 1, 1, ow) * stride + arg % k
        planes = np.arange(n * c).reshape(n, c, 1, 1)
        np.add.at(dx.reshape(n * c, h * w),
                  (np.broadcast_to(planes, arg.shape).ravel(), (rows * w + cols).ravel()),
                  g.ravel())
        return dx
    for ki in range(k):
        for kj in range(k):
            hit = arg == ki * k + kj
            if hit.any():
                dx[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += (
                    np.where(hit, g, 0))
    return dx


def bn_stats(x):
    mean = x.mean(axis=(0, 2), dtype=np.float64)
    d = x - mean[None, :, None]
    return mean, np.einsum("ncl,ncl->c", d, d) / (x.shape[0] * x.shape[2])


def bn_forward(x, shift, inv_std, gamma, beta):
    xhat = (x - shift[None, :, None]) * inv_std[None, :, None]
    return xhat, xhat * gamma[None, :, None] + beta[None, :, None]


def bn_backward(g, xhat, gamma, inv_std, need_x):
    dt = g.dtype.type
    m = g.shape[0] * g.shape[2]
    sg = g.sum(axis=(0, 2), dtype=np.float64).astype(g.dtype)
    sgx = np.einsum("ncl,ncl->c", g, xhat, dtype=np.float64).astype(g.dtype)
    dx = None
    if need_x:
        scale = gamma * inv_std / dt(m)
        dx = scale[None, :, None] * (dt(m) * g - sg[None, :, None] - xhat * sgx[None, :, None])
    return dx, sgx, sg

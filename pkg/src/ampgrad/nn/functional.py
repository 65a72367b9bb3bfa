"""Forward and backward rules for every layer kind.

Each function takes :class:`~ampgrad.autograd.Tensor` inputs and an optional
``layer`` whose ``layer_id`` and ``grad_transform`` are copied onto the graph
node it records.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..autograd import Kind, Tensor, make_output


def _out_extent(size: int, k: int, stride: int, pad: int = 0) -> int:
    extent = (size + 2 * pad - k) // stride + 1
    if extent <= 0:
        raise ValueError(
            f"non-positive output extent: input {size}, kernel {k}, stride {stride}, pad {pad}")
    return extent


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None, layer=None) -> Tensor:
    xd, wd = x.data, weight.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[1]:
        raise ValueError(f"linear: x {xd.shape} incompatible with W {wd.shape}")
    if bias is not None and bias.shape != (wd.shape[0],):
        raise ValueError(f"linear: bias {bias.shape} does not match W {wd.shape}")
    y = xd @ wd.T
    if bias is not None:
        y = y + bias.data
    need_x = x.requires_grad

    def backward_fn(g):
        dx = g @ wd if need_x else None
        dw = g.T @ xd
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output(y, inputs, backward_fn, Kind.LINEAR, layer)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad: int = 0, layer=None) -> Tensor:
    """Zero-padded 2-d cross-correlation, NCHW layout."""
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or wd.ndim != 4 or xd.shape[1] != wd.shape[1]:
        raise ValueError(f"conv2d: x {xd.shape} incompatible with kernel {wd.shape}")
    n, c, h, w = xd.shape
    f, _, kh, kw = wd.shape
    oh = _out_extent(h, kh, stride, pad)
    ow = _out_extent(w, kw, stride, pad)
    cols = kernels.im2col(np.ascontiguousarray(xd), kh, kw, stride, pad, oh, ow)
    wmat = wd.reshape(f, -1)
    y = cols @ wmat.T
    if bias is not None:
        y += bias.data
    y = np.ascontiguousarray(y.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
    need_x = x.requires_grad

    def backward_fn(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, f)
        dw = (cols.T @ g2).T.reshape(wd.shape)
        dx = None
        if need_x:
            dx = kernels.col2im(g2 @ wmat, n, c, h, w, kh, kw, stride, pad, oh, ow)
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output(y, inputs, backward_fn, Kind.CONV2D, layer)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, training: bool, momentum: float = 0.1,
              eps: float = 1e-5, layer=None) -> Tensor:
    """Per-channel batch normalisation over axis 1 of an [N, C] or [N, C, H, W] input.

    Training mode normalises with the biased batch variance and updates the
    running statistics in place (running variance stored unbiased).
    """
    xd = x.data
    if xd.ndim not in (2, 4):
        raise ValueError(f"batchnorm expects [N, C] or [N, C, H, W], got {xd.shape}")
    shape = xd.shape
    dt = xd.dtype
    x3 = np.ascontiguousarray(xd).reshape(shape[0], shape[1], -1)
    m = x3.shape[0] * x3.shape[2]
    if training:
        if m < 2:
            raise ValueError(f"batchnorm in train mode needs at least 2 values per channel, got {m}")
        mean, var = kernels.bn_stats(x3)
        running_mean[...] = (1 - momentum) * running_mean + momentum * mean
        running_var[...] = (1 - momentum) * running_var + momentum * var * (m / (m - 1))
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    shift = mean.astype(dt)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(dt)
    gd = np.ascontiguousarray(gamma.data)
    xhat, y = kernels.bn_forward(x3, shift, inv_std, gd, np.ascontiguousarray(beta.data))
    need_x = x.requires_grad

    def backward_fn(g):
        g3 = np.ascontiguousarray(g).reshape(x3.shape)
        if training:
            dx, dgamma, dbeta = kernels.bn_backward(g3, xhat, gd, inv_std, need_x)
        else:
            dgamma = (g3 * xhat).sum(axis=(0, 2))
            dbeta = g3.sum(axis=(0, 2))
            dx = g3 * (gd * inv_std)[None, :, None] if need_x else None
        return (None if dx is None else dx.reshape(shape)), dgamma, dbeta

    return make_output(y.reshape(shape), (x, gamma, beta), backward_fn, Kind.BATCHNORM, layer)


def relu(x: Tensor, layer=None) -> Tensor:
    xd = x.data
    y = np.maximum(xd, xd.dtype.type(0))
    return make_output(y, (x,), lambda g: (g * (y > 0),), Kind.RELU, layer)


def maxpool2d(x: Tensor, k: int, stride: int | None = None, layer=None) -> Tensor:
    """Window maximum; the gradient goes to the first maximum in row-major order."""
    stride = stride or k
    xd = np.ascontiguousarray(x.data)
    n, c, h, w = xd.shape
    _out_extent(h, k, stride)
    _out_extent(w, k, stride)
    y, arg = kernels.maxpool_forward(xd, k, stride)

    def backward_fn(g):
        return (kernels.maxpool_backward(np.ascontiguousarray(g), arg, h, w, k, stride),)

    return make_output(y, (x,), backward_fn, Kind.MAXPOOL, layer)


def avgpool2d(x: Tensor, k: int, stride: int | None = None, layer=None) -> Tensor:
    stride = stride or k
    xd = x.data
    n, c, h, w = xd.shape
    oh = _out_extent(h, k, stride)
    ow = _out_extent(w, k, stride)
    scale = xd.dtype.type(1.0 / (k * k))
    y = np.zeros((n, c, oh, ow), dtype=xd.dtype)
    for ki in range(k):
        for kj in range(k):
            y += xd[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride]
    y *= scale

    def backward_fn(g):
        dx = np.zeros_like(xd)
        share = g * scale
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += share
        return (dx,)

    return make_output(y, (x,), backward_fn, Kind.AVGPOOL, layer)


def residual_add(a: Tensor, b: Tensor, layer=None) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"residual add: skip path {b.shape} != main path {a.shape}")
    return make_output(a.data + b.data, (a, b), lambda g: (g, g), Kind.RESIDUAL_ADD, layer)


def flatten(x: Tensor, layer=None) -> Tensor:
    shape = x.shape
    return make_output(x.data.reshape(shape[0], -1), (x,), lambda g: (g.reshape(shape),),
                       Kind.FLATTEN, layer)


def softmax_cross_entropy(logits: Tensor, labels, layer=None) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    z = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ValueError(f"logits {z.shape} and labels {labels.shape} do not match")
    n, k = z.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = (logsumexp - shifted[rows, labels]).mean()

    def backward_fn(g):
        probs = np.exp(shifted - logsumexp[:, None])
        probs[rows, labels] -= 1
        return (probs * (g / z.dtype.type(n)),)

    return make_output(np.asarray(loss, dtype=z.dtype), (logits,), backward_fn,
                       Kind.SOFTMAX_CE, layer)

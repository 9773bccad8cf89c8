"""Differentiable primitive operations on :class:`~awfnet.tensor.Tensor`.

Each op computes its forward in the dtype of its inputs (float32 in training,
float64 inside gradient checks) and records a closure for its backward pass.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionError, GeometryError, InsufficientStatisticsError
from .tensor import Tensor, as_tensor


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_4d(x, name="input"):
    if x.ndim != 4:
        raise DimensionError(f"{name} must be 4-D [B, C, H, W]", x.shape)


# ---------------------------------------------------------------- elementwise
def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        out = a.data + b.data.astype(a.dtype, copy=False)
    except ValueError:
        raise DimensionError("add: incompatible shapes", a.shape, b.shape) from None
    sa, sb = a.shape, b.shape

    def _backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._from_op(out, (a, b), _backward, "add")


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        out = a.data * b.data.astype(a.dtype, copy=False)
    except ValueError:
        raise DimensionError("mul: incompatible shapes", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def _backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._from_op(out, (a, b), _backward, "mul")


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)
    return Tensor._from_op(out, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def exp(x):
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    xd = x.data
    return Tensor._from_op(np.log(xd), (x,), lambda g: (g / xd,), "log")


# ---------------------------------------------------------------- structural
def power(x, exponent):
    """Elementwise ``x ** exponent`` for non-negative ``x``."""
    xd = x.data
    out = xd ** exponent

    def _backward(g):
        return (g * exponent * xd ** (exponent - 1) if exponent != 0 else np.zeros_like(g),)

    return Tensor._from_op(out, (x,), _backward, "power")


def reshape(x, shape):
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape to {tuple(shape)}", src) from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(src),), "reshape")


def getitem(x, index):
    src, dtype = x.shape, x.dtype

    def _backward(g):
        full = np.zeros(src, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(np.array(x.data[index]), (x,), _backward, "getitem")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError("stack: all tensors need the same shape", shape, t.shape)
    out = np.stack([t.data for t in tensors], axis=axis)

    def _backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(out, tensors, _backward, "stack")


def concat_channels(tensors):
    """Concatenate [B, C_i, H, W] stacks along the channel axis, preserving order."""
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors:
        _check_4d(t)
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise DimensionError("concat_channels: batch/spatial dims differ", ref, t.shape)
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def _backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return Tensor._from_op(out, tensors, _backward, "concat_channels")


def sum(x, axis=None):  # noqa: A001
    src = x.shape
    out = np.asarray(x.data.sum(axis=axis))

    def _backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).astype(x.dtype),)

    return Tensor._from_op(out, (x,), _backward, "sum")


def mean(x, axis=None):
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(n))


def global_avg_pool(x):
    """[B, C, H, W] -> [B, C]."""
    _check_4d(x)
    B, C, H, W = x.shape
    out = x.data.mean(axis=(2, 3))

    def _backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).astype(x.dtype),)

    return Tensor._from_op(out, (x,), _backward, "global_avg_pool")


def linear(x, weight, bias=None):
    """[N, in] @ weight[out, in].T + bias[out]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError("linear: input features do not match weight", x.shape, weight.shape)
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    xd, wd = x.data, weight.data

    def _backward(g):
        grads = (g @ wd, g.T @ xd)
        if bias is not None:
            grads += (g.sum(axis=0),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, _backward, "linear")


def log_softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def _backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), _backward, "log_softmax")


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), _backward, "softmax")


# -------------------------------------------------------------- convolutions
def _pad(a, p):
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of [B, Cin, H, W] with weight [Cout, Cin, k, k]."""
    _check_4d(x)
    _check_4d(weight, "weight")
    B, Cin, H, W = x.shape
    Cout, wc, k, k2 = weight.shape
    if k != k2:
        raise DimensionError("conv2d: only square kernels are supported", weight.shape)
    if wc != Cin:
        raise DimensionError("conv2d: weight input channels do not match input", x.shape, weight.shape)
    if bias is not None and bias.shape != (Cout,):
        raise DimensionError("conv2d: bias must have one entry per output channel", bias.shape, weight.shape)
    if k < 1 or stride < 1:
        raise GeometryError("kernel size and stride must be positive")
    if H + 2 * padding < k or W + 2 * padding < k:
        raise GeometryError(f"kernel {k}x{k} exceeds padded extent {H + 2 * padding}x{W + 2 * padding}")
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1

    xp = _pad(x.data, padding)
    # [B, Cin, Ho, Wo, k, k]
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # [B, Ho, Wo, Cout]
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    wd = weight.data

    def _backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))  # [Cout, Cin, k, k]
        # scatter each kernel tap back into the padded input
        gcols = np.tensordot(g, wd, axes=([1], [0]))  # [B, Ho, Wo, Cin, k, k]
        gxp = np.zeros_like(xp)
        for ky in range(k):
            for kx in range(k):
                gxp[:, :, ky:ky + stride * Ho:stride, kx:kx + stride * Wo:stride] += (
                    gcols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        grads = (gx, gw)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, _backward, "conv2d")


def depthwise_conv2d(x, weight, bias=None, padding=1):
    """Per-channel spatial correlation with weight [C, 1, k, k], stride 1."""
    _check_4d(x)
    _check_4d(weight, "weight")
    B, C, H, W = x.shape
    if weight.shape[0] != C or weight.shape[1] != 1:
        raise DimensionError("depthwise_conv2d: weight must be [C, 1, k, k]", x.shape, weight.shape)
    k = weight.shape[2]
    if H + 2 * padding < k or W + 2 * padding < k:
        raise GeometryError(f"kernel {k}x{k} exceeds padded extent")
    Ho, Wo = H + 2 * padding - k + 1, W + 2 * padding - k + 1
    xp = _pad(x.data, padding)
    w = weight.data[:, 0]
    out = np.zeros((B, C, Ho, Wo), dtype=np.result_type(x.dtype, weight.dtype))
    for ky in range(k):
        for kx in range(k):
            out += xp[:, :, ky:ky + Ho, kx:kx + Wo] * w[None, :, ky, kx, None, None]
    if bias is not None:
        out += bias.data[None, :, None, None]

    def _backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(weight.data)
        for ky in range(k):
            for kx in range(k):
                gxp[:, :, ky:ky + Ho, kx:kx + Wo] += g * w[None, :, ky, kx, None, None]
                gw[:, 0, ky, kx] = (g * xp[:, :, ky:ky + Ho, kx:kx + Wo]).sum(axis=(0, 2, 3))
        gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        grads = (gx, gw)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, _backward, "depthwise_conv2d")


# ------------------------------------------------------------- normalization
def _normalize_backward(g_hat, xhat, inv_std, axes):
    n = np.prod([g_hat.shape[a] for a in axes])
    return inv_std / n * (
        n * g_hat
        - g_hat.sum(axis=axes, keepdims=True)
        - xhat * (g_hat * xhat).sum(axis=axes, keepdims=True)
    )


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel normalization of [B, C, H, W].

    ``running_mean``/``running_var`` are numpy buffers updated in place in
    training mode (momentum update, unbiased variance).
    """
    _check_4d(x)
    B, C, H, W = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError("batch_norm: affine parameters must be [C]", x.shape, gamma.shape)
    shape = (1, C, 1, 1)
    if training:
        n = B * H * W
        if n < 2:
            raise InsufficientStatisticsError(
                f"batch_norm needs at least 2 values per channel in train mode, got {n}"
            )
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * n / (n - 1)
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(shape)
    xhat = (x.data - mu.reshape(shape)) * inv_std
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    gd = gamma.data

    def _backward(g):
        g_hat = g * gd.reshape(shape)
        if training:
            gx = _normalize_backward(g_hat, xhat, inv_std, (0, 2, 3))
        else:
            gx = g_hat * inv_std
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (x, gamma, beta), _backward, "batch_norm")


def group_norm(x, num_groups, gamma, beta, eps=1e-5):
    """Normalize each sample over groups of C/num_groups channels, then a per-channel affine."""
    from .exceptions import ConfigError

    _check_4d(x)
    B, C, H, W = x.shape
    if num_groups < 1 or C % num_groups:
        raise ConfigError(f"channels ({C}) must be divisible by num_groups ({num_groups})")
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError("group_norm: affine parameters must be [C]", x.shape, gamma.shape)
    xg = x.data.reshape(B, num_groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv_std).reshape(x.shape)
    shape = (1, C, 1, 1)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    gd = gamma.data

    def _backward(g):
        g_hat = (g * gd.reshape(shape)).reshape(B, num_groups, -1)
        gx = _normalize_backward(g_hat, xhat.reshape(B, num_groups, -1), inv_std, (2,))
        return gx.reshape(x.shape), (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (x, gamma, beta), _backward, "group_norm")


def grouped_linear(x, weight, bias):
    """Apply ``weight[g] @ fiber + bias[g]`` to every S-vector of [B, G, S, h, w]."""
    if x.ndim != 5:
        raise DimensionError("grouped_linear: input must be [B, G, S, h, w]", x.shape)
    _, G, S, _, _ = x.shape
    if weight.shape != (G, S, S) or bias.shape != (G, S):
        raise DimensionError("grouped_linear: weight/bias do not match input groups", x.shape, weight.shape)
    xd, wd = x.data, weight.data
    out = np.einsum("gst,bgtyx->bgsyx", wd, xd, optimize=True) + bias.data[None, :, :, None, None]

    def _backward(g):
        gx = np.einsum("gst,bgsyx->bgtyx", wd, g, optimize=True)
        gw = np.einsum("bgsyx,bgtyx->gst", g, xd, optimize=True)
        return gx, gw, g.sum(axis=(0, 3, 4))

    return Tensor._from_op(out, (x, weight, bias), _backward, "grouped_linear")

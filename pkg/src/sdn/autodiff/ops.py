"""Differentiable operator set.

Every op validates shapes up front and raises ValueError naming the op, so
graph failures point at the offending node. Each vjp takes the upstream
gradient and a per-parent `needed` mask and may skip work for parents whose
gradients nobody asked for (this is what makes frozen-parameter updates
cheap).
"""

import numpy as np

from . import kernels
from .tensor import Tensor, make_node


def _unbroadcast(g, shape):
    """Sum g down to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    def vjp(g, needed):
        return (
            _unbroadcast(g, a.data.shape) if needed[0] else None,
            _unbroadcast(g, b.data.shape) if needed[1] else None,
        )

    return make_node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    def vjp(g, needed):
        return (
            _unbroadcast(g, a.data.shape) if needed[0] else None,
            _unbroadcast(-g, b.data.shape) if needed[1] else None,
        )

    return make_node(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    def vjp(g, needed):
        return (
            _unbroadcast(g * b.data, a.data.shape) if needed[0] else None,
            _unbroadcast(g * a.data, b.data.shape) if needed[1] else None,
        )

    return make_node(a.data * b.data, (a, b), vjp, "mul")


def div(a, b):
    def vjp(g, needed):
        return (
            _unbroadcast(g / b.data, a.data.shape) if needed[0] else None,
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape) if needed[1] else None,
        )

    return make_node(a.data / b.data, (a, b), vjp, "div")


def neg(a):
    def vjp(g, needed):
        return (-g,)

    return make_node(-a.data, (a,), vjp, "neg")


# -------------------------------------------------------------- elementwise


def relu(x):
    y = np.maximum(x.data, 0)

    def vjp(g, needed):
        return (g * (x.data > 0),)  # subgradient 0 at 0

    return make_node(y, (x,), vjp, "relu")


def leaky_relu(x, alpha=0.1):
    y = np.where(x.data > 0, x.data, x.data * np.asarray(alpha, dtype=x.dtype))

    def vjp(g, needed):
        return (np.where(x.data > 0, g, g * np.asarray(alpha, dtype=x.dtype)),)

    return make_node(y, (x,), vjp, "leaky_relu")


def tanh(x):
    y = np.tanh(x.data)

    def vjp(g, needed):
        return (g * (1 - y * y),)

    return make_node(y, (x,), vjp, "tanh")


def sigmoid(x):
    y = 1 / (1 + np.exp(-x.data))

    def vjp(g, needed):
        return (g * y * (1 - y),)

    return make_node(y, (x,), vjp, "sigmoid")


def exp(x):
    y = np.exp(x.data)

    def vjp(g, needed):
        return (g * y,)

    return make_node(y, (x,), vjp, "exp")


def softplus(x):
    # log(1 + e^x), stable for large |x|
    y = np.maximum(x.data, 0) + np.log1p(np.exp(-np.abs(x.data)))

    def vjp(g, needed):
        return (g / (1 + np.exp(-x.data)),)

    return make_node(y, (x,), vjp, "softplus")


def log_sigmoid(x):
    return neg(softplus(neg(x)))


# --------------------------------------------------------------- reductions


def sum(x, axis=None, keepdims=False):
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g, needed):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, tuple(a % x.data.ndim for a in axes))
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return make_node(y, (x,), vjp, "sum")


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    s = sum(x, axis=axis, keepdims=keepdims)
    return mul(s, Tensor(np.asarray(1.0 / count, dtype=x.dtype)))


def sorted_mean(x, axis):
    """Mean over `axis`, summing in ascending value order per output slot.

    The result depends only on the multiset of values along the axis, never
    on their order, so downstream consumers (set codes) are exactly
    permutation invariant. The gradient of a mean is uniform, so sorting
    changes nothing on the backward path.
    """
    n = x.data.shape[axis]
    y = np.sort(x.data, axis=axis).sum(axis=axis) / np.asarray(n, dtype=x.dtype)

    def vjp(g, needed):
        g = np.expand_dims(np.asarray(g) / np.asarray(n, dtype=x.dtype), axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return make_node(y, (x,), vjp, "sorted_mean")


# ------------------------------------------------------------------- shape


def reshape(x, shape):
    def vjp(g, needed):
        return (g.reshape(x.data.shape),)

    return make_node(x.data.reshape(shape), (x,), vjp, "reshape")


def transpose(x, axes=None):
    axes_ = tuple(reversed(range(x.data.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes_)

    def vjp(g, needed):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return make_node(np.ascontiguousarray(x.data.transpose(axes_)), (x,), vjp, "transpose")


def concat(tensors, axis):
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g, needed):
        pieces = np.split(g, splits, axis=axis)
        return tuple(
            np.ascontiguousarray(p) if want else None for p, want in zip(pieces, needed)
        )

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp, "concat")


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    if start < 0 or start + length > x.data.shape[axis]:
        raise ValueError(
            f"narrow: [{start}, {start + length}) outside axis {axis} of {x.data.shape}"
        )
    idx = tuple(
        slice(start, start + length) if a == axis else slice(None)
        for a in range(x.data.ndim)
    )

    def vjp(g, needed):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return make_node(np.ascontiguousarray(x.data[idx]), (x,), vjp, "narrow")


def stop_gradient(x):
    """Identity forward, blocks all backward flow."""
    return Tensor(x.data)


# ------------------------------------------------------------ linear algebra


def matmul(a, b):
    if a.data.ndim == b.data.ndim == 2:
        pass
    elif a.data.ndim == b.data.ndim == 3:
        if a.data.shape[0] != b.data.shape[0]:
            raise ValueError(
                f"matmul: batch dims differ {a.data.shape} vs {b.data.shape}"
            )
    else:
        raise ValueError(f"matmul: unsupported ranks {a.data.ndim} and {b.data.ndim}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dims differ {a.data.shape} vs {b.data.shape}")

    def vjp(g, needed):
        sw = (0, 2, 1) if a.data.ndim == 3 else (1, 0)
        ga = g @ b.data.transpose(sw) if needed[0] else None
        gb = a.data.transpose(sw) @ g if needed[1] else None
        return (ga, gb)

    return make_node(a.data @ b.data, (a, b), vjp, "matmul")


def linear(x, w, b=None):
    """x (B, din) @ w (dout, din)^T + b."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise ValueError(
            f"linear: input dim {x.data.shape[-1]} vs weight in-dim {w.data.shape[1]}"
        )
    y = matmul(x, transpose(w))
    if b is not None:
        y = add(y, b)
    return y


# ----------------------------------------------------------------- softmax


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g, needed):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return make_node(y, (x,), vjp, "softmax")


def log_softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def vjp(g, needed):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return make_node(y, (x,), vjp, "log_softmax")


# -------------------------------------------------------------- convolution


def conv2d(x, k, stride=1, pad=0):
    """Cross-correlation, NCHW input, OIHW kernel."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ValueError(f"conv2d: need 4-d input/kernel, got {x.data.shape}, {k.data.shape}")
    if x.data.shape[1] != k.data.shape[1]:
        raise ValueError(
            f"conv2d: channel mismatch input {x.data.shape} kernel {k.data.shape}"
        )
    if stride < 1:
        raise ValueError("conv2d: stride must be >= 1")
    _, _, h, w = x.data.shape
    _, _, kh, kw = k.data.shape
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ValueError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    plan = kernels.make_plan(x.data, k.data, stride, pad)
    y = plan.forward()

    def vjp(g, needed):
        gx = plan.backward_input(g) if needed[0] else None
        gk = plan.backward_kernel(g) if needed[1] else None
        return (gx, gk)

    return make_node(y, (x, k), vjp, "conv2d")


def bias_add_nchw(x, b):
    """Add a per-channel bias (C,) to an NCHW tensor."""
    return add(x, reshape(b, (1, b.data.shape[0], 1, 1)))


# ------------------------------------------------------- pooling / resizing


def avg_pool2d(x, k):
    b, c, h, w = x.data.shape
    if h % k or w % k:
        raise ValueError(f"avg_pool2d: size {h}x{w} not divisible by window {k}")
    y = x.data.reshape(b, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def vjp(g, needed):
        scale = np.asarray(1.0 / (k * k), dtype=x.dtype)
        gx = np.repeat(np.repeat(g, k, axis=2), k, axis=3) * scale
        return (gx,)

    return make_node(y, (x,), vjp, "avg_pool2d")


def upsample_nearest(x, factor):
    y = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def vjp(g, needed):
        b, c, h, w = x.data.shape
        gx = g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5))
        return (gx,)

    return make_node(y, (x,), vjp, "upsample_nearest")


# ----------------------------------------------- batch standardization (BN)


def batch_standardize(x, gamma, beta, running_mean, running_var, training, momentum=0.9, eps=1e-5):
    """Per-channel standardization of an NCHW tensor.

    training=True normalizes with batch statistics and folds them into the
    running buffers (plain numpy arrays, mutated in place) with the given
    decay; training=False normalizes with the running buffers.
    """
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= momentum
            running_mean += (1 - momentum) * mu
            running_var *= momentum
            running_var += (1 - momentum) * var
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, -1, 1, 1)) * ivar.reshape(1, -1, 1, 1)
    y = gamma.data.reshape(1, -1, 1, 1) * xhat + beta.data.reshape(1, -1, 1, 1)

    def vjp(g, needed):
        ggamma = (g * xhat).sum(axis=axes) if needed[1] else None
        gbeta = g.sum(axis=axes) if needed[2] else None
        if not needed[0]:
            return (None, ggamma, gbeta)
        gxhat = g * gamma.data.reshape(1, -1, 1, 1)
        if training:
            iv = ivar.reshape(1, -1, 1, 1)
            t1 = gxhat.sum(axis=axes, keepdims=True)
            t2 = (gxhat * xhat).sum(axis=axes, keepdims=True)
            gx = iv / m * (m * gxhat - t1 - xhat * t2)
        else:
            gx = gxhat * ivar.reshape(1, -1, 1, 1)
        return (gx, ggamma, gbeta)

    return make_node(y, (x, gamma, beta), vjp, "batch_standardize")


# ------------------------------------------------------ straight-through sign


def binarize_st(x):
    """Sign with sign(0) := +1; backward is the identity (straight through)."""
    y = np.where(x.data >= 0, 1.0, -1.0).astype(x.dtype)

    def vjp(g, needed):
        return (g,)

    return make_node(y, (x,), vjp, "binarize_st")

"""Differentiable primitives on (batch, channel, height, width) arrays.

Every forward has an explicit backward that is its exact adjoint; there is
no tape or graph. "Convolution" throughout means cross-correlation: with
learned weights the two are observationally equivalent, and this is the
convention the backward passes assume.
"""

from dataclasses import dataclass

import numpy as np

from .backend import get_backend


class ShapeError(ValueError):
    """Operand shapes violate an op precondition."""


@dataclass
class ConvParams:
    weights: np.ndarray  # (out_ch, in_ch, k, k); (c, 1, k, k) when depthwise
    bias: np.ndarray     # (out_ch,)
    stride: int = 1
    padding: int = 0
    depthwise: bool = False

    def __post_init__(self):
        k = self.weights.shape[2]
        if k % 2 != 1 or k != self.weights.shape[3]:
            raise ShapeError(f"kernel must be square with odd size, got {self.weights.shape[2:]}")
        if self.depthwise and self.weights.shape[1] != 1:
            raise ShapeError("depthwise weights must have shape (c, 1, k, k)")
        if not self.depthwise and self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("bias length must equal out_ch")


def _check_4d(x):
    if x.ndim != 4:
        raise ShapeError(f"expected (n, c, h, w) array, got shape {x.shape}")


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, p: ConvParams):
    _check_4d(x)
    if p.depthwise:
        if x.shape[1] != p.weights.shape[0]:
            raise ShapeError(f"depthwise filter count {p.weights.shape[0]} != channels {x.shape[1]}")
        if p.stride != 1:
            raise ShapeError("depthwise convolution only supports stride 1")
        return get_backend().depthwise_forward(_pad(x, p.padding), p.weights)
    if x.shape[1] != p.weights.shape[1]:
        raise ShapeError(f"input channels {x.shape[1]} != filter in_ch {p.weights.shape[1]}")
    return get_backend().conv2d_forward(_pad(x, p.padding), p.weights,
                                        p.bias.astype(x.dtype, copy=False), p.stride)


def conv2d_backward(x, p: ConvParams, dy):
    """Returns (dx, dw, db); db is None for depthwise filters (no bias)."""
    _check_4d(dy)
    xp = _pad(x, p.padding)
    be = get_backend()
    if p.depthwise:
        dxp = be.depthwise_input_grad(dy, p.weights, xp.shape)
        dw = be.depthwise_weight_grad(xp, dy, p.weights.shape[2])
        db = None
    else:
        dxp = be.conv2d_input_grad(dy, p.weights, xp.shape, p.stride)
        dw, db = be.conv2d_weight_grad(xp, dy, p.weights.shape[2], p.stride)
    pad = p.padding
    dx = dxp[:, :, pad:xp.shape[2] - pad, pad:xp.shape[3] - pad] if pad else dxp
    if dx.shape != x.shape or dw.shape != p.weights.shape:
        raise ShapeError("gradient shape mismatch: dy does not match the forward output")
    return np.ascontiguousarray(dx), dw, db


def decimate2(x, axis, phase="even"):
    """Keep every second sample along 'height' or 'width'."""
    _check_4d(x)
    ax = {"height": 2, "width": 3}[axis]
    if x.shape[ax] % 2 != 0:
        raise ShapeError(f"{axis} must be even to decimate, got {x.shape[ax]}")
    start = {"even": 0, "odd": 1}[phase]
    sl = [slice(None)] * 4
    sl[ax] = slice(start, None, 2)
    return np.ascontiguousarray(x[tuple(sl)])


def decimate2_backward(dy, axis, phase, x_shape):
    ax = {"height": 2, "width": 3}[axis]
    start = {"even": 0, "odd": 1}[phase]
    dx = np.zeros(x_shape, dtype=dy.dtype)
    sl = [slice(None)] * 4
    sl[ax] = slice(start, None, 2)
    dx[tuple(sl)] = dy
    return dx


def maxpool2x2(x):
    _check_4d(x)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {x.shape[2:]}")
    return get_backend().maxpool2x2_forward(x)


def maxpool2x2_backward(dy, idx, x_shape):
    return get_backend().maxpool2x2_backward(dy, idx, x_shape)


def leaky_relu(x, slope=0.1):
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def leaky_relu_backward(x, dy, slope=0.1):
    return np.where(x >= 0, dy, dy * dy.dtype.type(slope))


def fully_connected(x, w, b):
    """x: (n, c, h, w) or (n, d); w: (out, in); b: (out,)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != w.shape[1]:
        raise ShapeError(f"flattened input {flat.shape[1]} != weight in-dim {w.shape[1]}")
    return flat @ w.T + b


def fully_connected_backward(x, w, dy):
    flat = x.reshape(x.shape[0], -1)
    dx = (dy @ w).reshape(x.shape)
    dw = dy.T @ flat
    db = dy.sum(axis=0)
    return dx, dw, db


def dropout_mask(shape, rate, rng):
    """Inverted-dropout multiplier: 0 with probability rate, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def dropout(x, rate, rng, training):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = dropout_mask(x.shape, rate, rng).astype(x.dtype)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean NLL over the batch and its gradient wrt logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    p = softmax(logits)
    nll = -np.log(np.maximum(p[np.arange(n), labels], np.finfo(p.dtype).tiny))
    loss = float(nll.mean())
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype)


def concat_channels(xs):
    if len(xs) == 1:
        return xs[0]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError("concat_channels requires matching batch and spatial dims")
    return np.concatenate(xs, axis=1)


def concat_channels_backward(dy, channel_counts):
    out, off = [], 0
    for c in channel_counts:
        out.append(np.ascontiguousarray(dy[:, off:off + c]))
        off += c
    return out

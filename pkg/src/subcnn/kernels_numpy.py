"""Pure-numpy convolution and pooling kernels (im2col + BLAS).

This is the fallback backend; see kernels_numba.py for the jitted loop
versions and backend.py for how one of the two gets selected.

All kernels take pre-padded inputs (padding is applied by the callers in
ops.py) and implement cross-correlation: out[o,i,j] = sum_c,u,v
w[o,c,u,v] * x[c, i*stride+u, j*stride+v].
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xp, k, stride):
    # (n, c, oh, ow, k, k) view of every kxk patch at the given stride
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(xp, w, b, stride):
    n = xp.shape[0]
    co, ci, k, _ = w.shape
    win = _windows(xp, k, stride)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, ci * k * k)
    y = cols @ w.reshape(co, -1).T
    y += b
    return np.ascontiguousarray(y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def conv2d_input_grad(dy, w, xp_shape, stride):
    n, c, hp, wp = xp_shape
    co, ci, k, _ = w.shape
    oh, ow = dy.shape[2], dy.shape[3]
    dyr = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    # (n*oh*ow, ci*k*k) -> scatter back into the padded input
    dcols = (dyr @ w.reshape(co, -1)).reshape(n, oh, ow, ci, k, k)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride] += \
                dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return dxp


def conv2d_weight_grad(xp, dy, k, stride):
    n = xp.shape[0]
    ci = xp.shape[1]
    co = dy.shape[1]
    win = _windows(xp, k, stride)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(ci * k * k, n * oh * ow)
    dyr = dy.transpose(1, 0, 2, 3).reshape(co, n * oh * ow)
    dw = (dyr @ cols.T).reshape(co, ci, k, k)
    db = dy.sum(axis=(0, 2, 3))
    return dw, db


def depthwise_forward(xp, w):
    # w: (c, 1, k, k), stride 1 only (frontend filters never stride)
    k = w.shape[2]
    win = _windows(xp, k, 1)
    return np.einsum('ncijuv,cuv->ncij', win, w[:, 0], optimize=True)


def depthwise_input_grad(dy, w, xp_shape):
    k = w.shape[2]
    oh, ow = dy.shape[2], dy.shape[3]
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, :, u:u + oh, v:v + ow] += dy * w[:, 0, u, v][None, :, None, None]
    return dxp


def depthwise_weight_grad(xp, dy, k):
    win = _windows(xp, k, 1)
    dw = np.einsum('ncijuv,ncij->cuv', win, dy, optimize=True)
    return dw[:, None]


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    # argmax picks the first maximum in row-major window order (tie-break)
    idx = flat.argmax(axis=4)
    y = np.take_along_axis(flat, idx[..., None], axis=4)[..., 0]
    return y, idx.astype(np.int8)


def maxpool2x2_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    dflat = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(dflat, idx[..., None].astype(np.int64), dy[..., None], axis=4)
    dx = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, h, w))

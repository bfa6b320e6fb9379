"""Numba-jitted convolution and pooling kernels.

Same contracts as kernels_numpy.py: inputs are pre-padded, convolution is
cross-correlation. Loops are parallelized over the batch (forward/input
grad) or output channel (weight grad) so gradient accumulation stays
race-free and deterministic.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(xp, w, b, stride):
    # channel/tap loops outside the spatial ones so the innermost j loop
    # walks both xp and y contiguously
    n, ci, hp, wp = xp.shape
    co, _, k, _ = w.shape
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    y = np.empty((n, co, oh, ow), dtype=xp.dtype)
    for ni in prange(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    y[ni, o, i, j] = b[o]
            for c in range(ci):
                for u in range(k):
                    for v in range(k):
                        wv = w[o, c, u, v]
                        for i in range(oh):
                            for j in range(ow):
                                y[ni, o, i, j] += wv * xp[ni, c, i * stride + u, j * stride + v]
    return y


@njit(parallel=True, cache=True)
def conv2d_input_grad(dy, w, hp, wp, stride):
    n, co, oh, ow = dy.shape
    _, ci, k, _ = w.shape
    dxp = np.zeros((n, ci, hp, wp), dtype=dy.dtype)
    for ni in prange(n):
        for c in range(ci):
            for o in range(co):
                for u in range(k):
                    for v in range(k):
                        wv = w[o, c, u, v]
                        for i in range(oh):
                            for j in range(ow):
                                dxp[ni, c, i * stride + u, j * stride + v] += wv * dy[ni, o, i, j]
    return dxp


@njit(parallel=True, cache=True)
def conv2d_weight_grad(xp, dy, k, stride):
    n, ci, hp, wp = xp.shape
    _, co, oh, ow = dy.shape
    dw = np.zeros((co, ci, k, k), dtype=xp.dtype)
    db = np.zeros(co, dtype=xp.dtype)
    for o in prange(co):
        for ni in range(n):
            for i in range(oh):
                for j in range(ow):
                    db[o] += dy[ni, o, i, j]
            for c in range(ci):
                for u in range(k):
                    for v in range(k):
                        acc = dw[o, c, u, v]
                        for i in range(oh):
                            for j in range(ow):
                                acc += dy[ni, o, i, j] * xp[ni, c, i * stride + u, j * stride + v]
                        dw[o, c, u, v] = acc
    return dw, db


@njit(parallel=True, cache=True)
def depthwise_forward(xp, w):
    n, c, hp, wp = xp.shape
    k = w.shape[2]
    oh = hp - k + 1
    ow = wp - k + 1
    y = np.zeros((n, c, oh, ow), dtype=xp.dtype)
    for ni in prange(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    for u in range(k):
                        for v in range(k):
                            y[ni, ch, i, j] += w[ch, 0, u, v] * xp[ni, ch, i + u, j + v]
    return y


@njit(parallel=True, cache=True)
def depthwise_input_grad(dy, w, hp, wp):
    n, c, oh, ow = dy.shape
    k = w.shape[2]
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    for ni in prange(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    g = dy[ni, ch, i, j]
                    for u in range(k):
                        for v in range(k):
                            dxp[ni, ch, i + u, j + v] += g * w[ch, 0, u, v]
    return dxp


@njit(parallel=True, cache=True)
def depthwise_weight_grad(xp, dy, k):
    n, c, hp, wp = xp.shape
    oh, ow = dy.shape[2], dy.shape[3]
    dw = np.zeros((c, 1, k, k), dtype=xp.dtype)
    for ch in prange(c):
        for ni in range(n):
            for i in range(oh):
                for j in range(ow):
                    g = dy[ni, ch, i, j]
                    for u in range(k):
                        for v in range(k):
                            dw[ch, 0, u, v] += g * xp[ni, ch, i + u, j + v]
    return dw

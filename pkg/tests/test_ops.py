"""Finite-difference gradient checks and contracts for the primitive ops."""

import numpy as np
import pytest

from subcnn import ops
from conftest import FD_TOL, finite_diff, rel_err

RNG = np.random.default_rng(1234)


def _randn(*shape):
    return RNG.standard_normal(shape)


# --------------------------------------------------------------------------
# convolution


@pytest.mark.parametrize("stride,pad,k", [(1, 1, 3), (1, 2, 5), (2, 1, 3), (1, 0, 3)])
def test_conv2d_gradients(stride, pad, k):
    x = _randn(2, 3, 8, 8)
    w = _randn(4, 3, k, k) * 0.3
    b = _randn(4) * 0.1
    p = ops.ConvParams(w, b, stride=stride, padding=pad)
    y = ops.conv2d_forward(x, p)
    dy = _randn(*y.shape)

    def loss_x(xv):
        return float((ops.conv2d_forward(xv, p) * dy).sum())

    def loss_w(wv):
        return float((ops.conv2d_forward(x, ops.ConvParams(wv, b, stride, pad)) * dy).sum())

    def loss_b(bv):
        return float((ops.conv2d_forward(x, ops.ConvParams(w, bv, stride, pad)) * dy).sum())

    dx, dw, db = ops.conv2d_backward(x, p, dy)
    assert rel_err(dx, finite_diff(loss_x, x)) < FD_TOL
    assert rel_err(dw, finite_diff(loss_w, w)) < FD_TOL
    assert rel_err(db, finite_diff(loss_b, b)) < FD_TOL


def test_depthwise_conv_gradients():
    x = _randn(2, 3, 8, 8)
    w = _randn(3, 1, 5, 5) * 0.3
    p = ops.ConvParams(w, np.zeros(0), padding=2, depthwise=True)
    y = ops.conv2d_forward(x, p)
    assert y.shape == x.shape
    dy = _randn(*y.shape)
    dx, dw, db = ops.conv2d_backward(x, p, dy)
    assert db is None

    def loss_x(xv):
        return float((ops.conv2d_forward(xv, p) * dy).sum())

    def loss_w(wv):
        q = ops.ConvParams(wv, np.zeros(0), padding=2, depthwise=True)
        return float((ops.conv2d_forward(x, q) * dy).sum())

    assert rel_err(dx, finite_diff(loss_x, x)) < FD_TOL
    assert rel_err(dw, finite_diff(loss_w, w)) < FD_TOL


def test_conv_is_cross_correlation():
    # a kernel with a single off-center tap shifts the image opposite to
    # what flip-convolution would do
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 0, 0] = 1.0  # tap at (-1, -1) relative to center
    y = ops.conv2d_forward(x, ops.ConvParams(w, np.zeros(1), padding=1))
    assert y[0, 0, 3, 3] == 1.0 and y.sum() == 1.0


def test_conv_shape_errors():
    with pytest.raises(ops.ShapeError):
        ops.ConvParams(_randn(4, 3, 2, 2), np.zeros(4))  # even kernel
    with pytest.raises(ops.ShapeError):
        ops.ConvParams(_randn(4, 3, 3, 5), np.zeros(4))  # non-square
    p = ops.ConvParams(_randn(4, 3, 3, 3), np.zeros(4), padding=1)
    with pytest.raises(ops.ShapeError):
        ops.conv2d_forward(_randn(2, 5, 8, 8), p)  # channel mismatch


# --------------------------------------------------------------------------
# decimation


@pytest.mark.parametrize("axis", ["height", "width"])
@pytest.mark.parametrize("phase", ["even", "odd"])
def test_decimate2_adjoint(axis, phase):
    x = _randn(2, 3, 6, 8)
    y = ops.decimate2(x, axis, phase)
    dy = _randn(*y.shape)
    dx = ops.decimate2_backward(dy, axis, phase, x.shape)
    # <Dx, dy> == <x, D^T dy>
    assert np.isclose((y * dy).sum(), (x * dx).sum())


def test_decimate2_keeps_even_phase():
    x = np.arange(8, dtype=float).reshape(1, 1, 8, 1)
    y = ops.decimate2(x, "height", "even")
    assert list(y.ravel()) == [0, 2, 4, 6]
    y = ops.decimate2(x, "height", "odd")
    assert list(y.ravel()) == [1, 3, 5, 7]


# --------------------------------------------------------------------------
# pooling


def test_maxpool_first_tie_row_major():
    x = np.full((1, 1, 2, 2), 7.0)
    y, idx = ops.maxpool2x2(x)
    assert y[0, 0, 0, 0] == 7.0
    dy = np.ones_like(y)
    dx = ops.maxpool2x2_backward(dy, idx, x.shape)
    # gradient routed to the first (row-major) maximal element only
    assert dx[0, 0, 0, 0] == 1.0 and dx.sum() == 1.0


def test_maxpool_gradient():
    x = _randn(2, 3, 6, 6)
    y, idx = ops.maxpool2x2(x)
    dy = _randn(*y.shape)
    dx = ops.maxpool2x2_backward(dy, idx, x.shape)

    def loss(xv):
        yv, _ = ops.maxpool2x2(xv)
        return float((yv * dy).sum())

    assert rel_err(dx, finite_diff(loss, x)) < FD_TOL


# --------------------------------------------------------------------------
# activations, fc, dropout, loss


def test_leaky_relu_gradient_and_slope():
    x = _randn(50) * 2
    y = ops.leaky_relu(x, 0.1)
    assert np.allclose(y[x < 0], 0.1 * x[x < 0])
    assert np.allclose(y[x >= 0], x[x >= 0])
    dy = _randn(50)
    dx = ops.leaky_relu_backward(x, dy, 0.1)
    assert rel_err(dx, finite_diff(lambda v: float((ops.leaky_relu(v, 0.1) * dy).sum()), x)) < FD_TOL


def test_fully_connected_gradients():
    x = _randn(3, 2, 4, 4)
    w = _randn(5, 32) * 0.2
    b = _randn(5)
    dy = _randn(3, 5)
    dx, dw, db = ops.fully_connected_backward(x, w, dy)
    assert rel_err(dx, finite_diff(lambda v: float((ops.fully_connected(v, w, b) * dy).sum()), x)) < FD_TOL
    assert rel_err(dw, finite_diff(lambda v: float((ops.fully_connected(x, v, b) * dy).sum()), w)) < FD_TOL
    assert rel_err(db, finite_diff(lambda v: float((ops.fully_connected(x, w, v) * dy).sum()), b)) < FD_TOL


def test_dropout_inverted_scaling_and_determinism():
    x = np.ones((4, 1000))
    out1, m1 = ops.dropout(x, 0.5, np.random.default_rng(9), training=True)
    out2, m2 = ops.dropout(x, 0.5, np.random.default_rng(9), training=True)
    assert np.array_equal(out1, out2) and np.array_equal(m1, m2)
    kept = out1[out1 != 0]
    assert np.allclose(kept, 2.0)  # inverted scaling by 1/(1-rate)
    assert abs(out1.mean() - 1.0) < 0.1
    out_eval, _ = ops.dropout(x, 0.5, np.random.default_rng(9), training=False)
    assert np.array_equal(out_eval, x)


def test_softmax_cross_entropy_gradient():
    logits = _randn(6, 5) * 3
    labels = RNG.integers(0, 5, 6)
    _, grad = ops.softmax_cross_entropy(logits, labels)

    def loss(lv):
        return float(ops.softmax_cross_entropy(lv, labels)[0])

    assert rel_err(grad, finite_diff(loss, logits)) < FD_TOL


def test_softmax_stability():
    logits = np.array([[1000.0, 1000.0, -1000.0]])
    p = ops.softmax(logits)
    assert np.isfinite(p).all() and np.isclose(p.sum(), 1.0)


def test_concat_channels_roundtrip():
    xs = [_randn(2, c, 4, 4) for c in (1, 3, 2)]
    y = ops.concat_channels(xs)
    assert y.shape == (2, 6, 4, 4)
    parts = ops.concat_channels_backward(y, [1, 3, 2])
    for a, b in zip(xs, parts):
        assert np.array_equal(a, b)

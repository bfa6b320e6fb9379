"""Subband decomposition frontends.

Three variants over the same binary split tree of depth 2M (height split
then width split per decomposition layer, repeated M times, 4^M leaves):

- ASD: every split owns independent upper (U) and lower (L) depthwise
  filters, both learned.
- CASD: every split owns only U; the lower branch is the residual
  Y2 = X - U*X, so the two branches are complementary by construction.
- WSD: fixed Daubechies analysis pair (db2 by default, Haar optional)
  applied separably along the split axis; nothing is learned.

Filtering is depthwise with same-size zero padding; decimation keeps the
even phase. Split nodes are numbered in depth-first pre-order, upper
branch first, which also fixes the subband ordering.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops

# Orthonormal 4-tap Daubechies analysis lowpass; taps sum to sqrt(2).
_DB2_LOW = np.array([1 + np.sqrt(3), 3 + np.sqrt(3), 3 - np.sqrt(3), 1 - np.sqrt(3)]) / (4 * np.sqrt(2))
_HAAR_LOW = np.array([1.0, 1.0]) / np.sqrt(2)


def wavelet_taps(name):
    """(lowpass, highpass) analysis taps; highpass by quadrature mirror."""
    low = {"db2": _DB2_LOW, "haar": _HAAR_LOW}.get(name)
    if low is None:
        raise ValueError(f"unknown wavelet {name!r}; choose 'db2' or 'haar'")
    high = low[::-1].copy()
    high[1::2] *= -1.0
    return low, high


@dataclass
class FrontendSpec:
    mode: str               # 'asd' | 'casd' | 'wsd'
    depth: int = 1          # M
    order: int = 5          # filter size k (ASD/CASD)
    channels: int = 1
    wavelet: str = "db2"    # WSD only

    def __post_init__(self):
        if self.mode not in ("asd", "casd", "wsd"):
            raise ValueError(f"unknown frontend mode {self.mode!r}")
        if self.depth < 1:
            raise ValueError("decomposition depth must be >= 1")
        if self.order % 2 != 1:
            raise ValueError("filter order must be odd")

    @property
    def num_nodes(self):
        return 4 ** self.depth - 1

    @property
    def num_subbands(self):
        return 4 ** self.depth

    @property
    def num_filters(self):
        if self.mode == "asd":
            return 2 * self.num_nodes
        if self.mode == "casd":
            return self.num_nodes
        return 0


@dataclass
class FrontendState:
    spec: FrontendSpec
    params: dict = field(default_factory=dict)  # 'node{i}/U' (+ '/L' for ASD)

    def param_names(self):
        return sorted(self.params)

    def trainable(self):
        return self.spec.mode != "wsd"


def _node_axis(level):
    return "height" if level % 2 == 0 else "width"


def _embed_taps(taps, axis, channels, dtype):
    """1-D taps as a zero-padded odd square depthwise kernel along axis."""
    k = len(taps) + 1 if len(taps) % 2 == 0 else len(taps)
    w = np.zeros((channels, 1, k, k), dtype=dtype)
    c = k // 2
    if axis == "height":
        w[:, 0, :len(taps), c] = taps
    else:
        w[:, 0, c, :len(taps)] = taps
    return w


def frontend_init(spec: FrontendSpec, rng_seed, dtype=np.float32):
    """ASD/CASD filters ~ N(0, 0.01^2); WSD carries the fixed wavelet pair."""
    st = FrontendState(spec)
    rng = np.random.default_rng(rng_seed)
    n_internal = 2 ** (2 * spec.depth) - 1
    for i in range(n_internal):
        if spec.mode == "wsd":
            continue
        shape = (spec.channels, 1, spec.order, spec.order)
        st.params[f"node{i}/U"] = (rng.standard_normal(shape) * 0.01).astype(dtype)
        if spec.mode == "asd":
            st.params[f"node{i}/L"] = (rng.standard_normal(shape) * 0.01).astype(dtype)
    return st


def _wsd_kernels(spec, axis, dtype):
    low, high = wavelet_taps(spec.wavelet)
    return (_embed_taps(low, axis, spec.channels, dtype),
            _embed_taps(high, axis, spec.channels, dtype))


def _dw(x, w):
    pad = w.shape[2] // 2
    return ops.conv2d_forward(x, ops.ConvParams(w, np.zeros(0), padding=pad, depthwise=True))


def decompose(x, st: FrontendState):
    """Run the full tree. Returns (subbands, cache); cache feeds backward."""
    spec = st.spec
    if x.shape[1] != spec.channels:
        raise ops.ShapeError(f"frontend built for {spec.channels} channels, got {x.shape[1]}")
    if x.shape[2] % 2 ** spec.depth or x.shape[3] % 2 ** spec.depth:
        raise ops.ShapeError(f"spatial dims {x.shape[2:]} not divisible by 2^{spec.depth}")
    leaves = []
    cache = {"inputs": {}, "x_shape": x.shape, "dtype": x.dtype}
    counter = [0]

    def split(t, level):
        if level == 2 * spec.depth:
            leaves.append(t)
            return
        idx = counter[0]
        counter[0] += 1
        axis = _node_axis(level)
        cache["inputs"][idx] = t
        if spec.mode == "wsd":
            low, high = _wsd_kernels(spec, axis, t.dtype)
            y1, y2 = _dw(t, low), _dw(t, high)
        elif spec.mode == "casd":
            y1 = _dw(t, st.params[f"node{idx}/U"])
            y2 = t - y1
        else:
            y1 = _dw(t, st.params[f"node{idx}/U"])
            y2 = _dw(t, st.params[f"node{idx}/L"])
        split(ops.decimate2(y1, axis, "even"), level + 1)
        split(ops.decimate2(y2, axis, "even"), level + 1)

    split(x, 0)
    return leaves, cache


def frontend_backward(d_subbands, st: FrontendState, cache):
    """Reverse the tree: returns (dx, param-gradient dict).

    CASD per split (g1, g2 are the branch gradients):
        dU = adjoint_weight(X, g1 - g2)
        dX = adjoint_input(g1 - g2, U) + g2
    ASD backprops each branch through its own filter; WSD only to input.
    """
    spec = st.spec
    if len(d_subbands) != spec.num_subbands:
        raise ops.ShapeError(f"expected {spec.num_subbands} subband gradients, got {len(d_subbands)}")
    grads = {}
    counter = [0]
    leaf_iter = iter(d_subbands)

    def dw_backward(t, w, dy):
        pad = w.shape[2] // 2
        p = ops.ConvParams(w, np.zeros(0), padding=pad, depthwise=True)
        dx, dw, _ = ops.conv2d_backward(t, p, dy)
        return dx, dw

    def split(level, shape):
        if level == 2 * spec.depth:
            g = next(leaf_iter)
            if g.shape != shape:
                raise ops.ShapeError(f"subband gradient shape {g.shape} != expected {shape}")
            return g
        idx = counter[0]
        counter[0] += 1
        axis = _node_axis(level)
        ax = 2 if axis == "height" else 3
        half = list(shape)
        half[ax] //= 2
        g1d = split(level + 1, tuple(half))
        g2d = split(level + 1, tuple(half))
        g1 = ops.decimate2_backward(g1d, axis, "even", shape)
        g2 = ops.decimate2_backward(g2d, axis, "even", shape)
        t = cache["inputs"][idx]
        if spec.mode == "wsd":
            low, high = _wsd_kernels(spec, axis, g1.dtype)
            dx1, _ = dw_backward(t, low, g1)
            dx2, _ = dw_backward(t, high, g2)
            return dx1 + dx2
        if spec.mode == "casd":
            diff = g1 - g2
            dx, dw = dw_backward(t, st.params[f"node{idx}/U"], diff)
            grads[f"node{idx}/U"] = dw
            return dx + g2
        dx1, dw1 = dw_backward(t, st.params[f"node{idx}/U"], g1)
        dx2, dw2 = dw_backward(t, st.params[f"node{idx}/L"], g2)
        grads[f"node{idx}/U"] = dw1
        grads[f"node{idx}/L"] = dw2
        return dx1 + dx2

    dx = split(0, cache["x_shape"])
    return dx, grads


def node_layout(depth):
    """(node index, level, axis) triples in the depth-first order used above."""
    out = []
    counter = [0]

    def walk(level):
        if level == 2 * depth:
            return
        idx = counter[0]
        counter[0] += 1
        out.append((idx, level, _node_axis(level)))
        walk(level + 1)
        walk(level + 1)

    walk(0)
    return out


def frequency_response(kernel, grid):
    """Per-channel |DFT| of a depthwise kernel on a grid x grid lattice.

    Returns (freqs, mags): freqs are the sample frequencies normalized to
    pi in [-1, 1), mags has shape (c, grid, grid) indexed [Fy, Fx].
    """
    if grid < kernel.shape[2]:
        raise ValueError(f"grid {grid} smaller than kernel size {kernel.shape[2]}")
    mags = np.abs(np.fft.fftshift(np.fft.fft2(kernel[:, 0], s=(grid, grid)), axes=(1, 2)))
    freqs = np.fft.fftshift(np.fft.fftfreq(grid)) * 2.0
    return freqs, mags

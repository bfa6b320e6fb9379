"""Kernel backend selection.

SUBCNN_BACKEND=numba (default) uses the jitted loop kernels,
SUBCNN_BACKEND=numpy the im2col/BLAS fallback. Both implement identical
contracts; benchmarks/bench_backends.py compares them.
"""

import os

from . import kernels_numpy

try:
    from . import kernels_numba
    _HAVE_NUMBA = True
except ImportError:
    kernels_numba = None
    _HAVE_NUMBA = False

_DEFAULT = "numba" if _HAVE_NUMBA else "numpy"


def backend_name():
    name = os.environ.get("SUBCNN_BACKEND", _DEFAULT).lower()
    if name not in ("numpy", "numba"):
        raise ValueError(f"unknown backend {name!r}; choose 'numpy' or 'numba'")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("SUBCNN_BACKEND=numba but numba is not importable")
    return name


class _NumpyBackend:
    name = "numpy"
    conv2d_forward = staticmethod(kernels_numpy.conv2d_forward)
    conv2d_input_grad = staticmethod(kernels_numpy.conv2d_input_grad)
    conv2d_weight_grad = staticmethod(kernels_numpy.conv2d_weight_grad)
    depthwise_forward = staticmethod(kernels_numpy.depthwise_forward)
    depthwise_input_grad = staticmethod(kernels_numpy.depthwise_input_grad)
    depthwise_weight_grad = staticmethod(kernels_numpy.depthwise_weight_grad)
    maxpool2x2_forward = staticmethod(kernels_numpy.maxpool2x2_forward)
    maxpool2x2_backward = staticmethod(kernels_numpy.maxpool2x2_backward)


class _NumbaBackend:
    """Adapts the jitted kernels to the numpy-backend signatures."""

    name = "numba"

    @staticmethod
    def conv2d_forward(xp, w, b, stride):
        return kernels_numba.conv2d_forward(xp, w, b, stride)

    @staticmethod
    def conv2d_input_grad(dy, w, xp_shape, stride):
        return kernels_numba.conv2d_input_grad(dy, w, xp_shape[2], xp_shape[3], stride)

    @staticmethod
    def conv2d_weight_grad(xp, dy, k, stride):
        return kernels_numba.conv2d_weight_grad(xp, dy, k, stride)

    @staticmethod
    def depthwise_forward(xp, w):
        return kernels_numba.depthwise_forward(xp, w)

    @staticmethod
    def depthwise_input_grad(dy, w, xp_shape):
        return kernels_numba.depthwise_input_grad(dy, w, xp_shape[2], xp_shape[3])

    @staticmethod
    def depthwise_weight_grad(xp, dy, k):
        return kernels_numba.depthwise_weight_grad(xp, dy, k)

    # pooling is not a hot spot; reuse the vectorized numpy version
    maxpool2x2_forward = staticmethod(kernels_numpy.maxpool2x2_forward)
    maxpool2x2_backward = staticmethod(kernels_numpy.maxpool2x2_backward)


def get_backend():
    return _NumbaBackend if backend_name() == "numba" else _NumpyBackend

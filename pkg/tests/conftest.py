import os
import struct

import numpy as np
import pytest

# numpy kernels are the bit-reproducible reference path; individual tests
# opt into numba where cross-backend agreement is the point
os.environ.setdefault("SUBCNN_BACKEND", "numpy")

FD_STEP = 1e-5
FD_TOL = 1e-4


def finite_diff(f, x, step=FD_STEP):
    """Central-difference gradient of scalar f at x (f64)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * step)
    return g


def rel_err(analytic, numeric):
    denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return np.abs(analytic - numeric).max() / denom


def write_idx(path, arr, magic):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(np.uint8).tobytes())


@pytest.fixture
def mnist_dir(tmp_path):
    """Tiny synthetic dataset in MNIST's on-disk layout."""
    rng = np.random.default_rng(42)
    d = tmp_path / "mnist"
    d.mkdir()
    for prefix, n in (("train", 96), ("t10k", 48)):
        imgs = rng.integers(0, 256, size=(n, 28, 28)).astype(np.uint8)
        lbls = rng.integers(0, 10, size=n).astype(np.uint8)
        write_idx(d / f"{prefix}-images-idx3-ubyte", imgs, 0x803)
        write_idx(d / f"{prefix}-labels-idx1-ubyte", lbls, 0x801)
    return str(d)


def tiny_msr_config(mode="asd", depth=1, input_hw=8, classes=4, channels=1):
    """Reduced per-subband model for gradient and training tests."""
    from subcnn.config import config_from_dict
    return config_from_dict({
        "name": f"tiny-msr-{mode}",
        "arch": "msr",
        "input": {"channels": channels, "height": input_hw, "width": input_hw},
        "classes": classes,
        "frontend": {"mode": mode, "depth": depth, "order": 3},
        "layers": [{"conv": {"k": 3, "out": 3}}, {"conv": {"k": 3, "out": 4}}, "pool"],
        "fc_hidden": [8],
        "dropout": 0.5,
    })

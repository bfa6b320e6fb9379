"""Dataset loading (MNIST IDX, CIFAR binary), augmentation, and batching.

Images are float32 NCHW in [0, 1]. Per-image standardization (zero mean,
unit variance with a 1e-6 floor) is applied at batch time so that the raw
pixel arrays stay available for quantization experiments.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

STD_EPS = 1e-6


class DataFormatError(Exception):
    """Raised when a dataset file fails magic/size validation."""


# --------------------------------------------------------------------------
# MNIST IDX format


def _read_idx(path, magic_expected, rank):
    with open(path, "rb") as fh:
        header = fh.read(4 + 4 * rank)
        if len(header) < 4 + 4 * rank:
            raise DataFormatError(f"{path}: truncated IDX header at offset {len(header)}")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != magic_expected:
            raise DataFormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0 "
                f"(expected 0x{magic_expected:08x})")
        dims = struct.unpack(f">{rank}I", header[4:])
        payload = fh.read()
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes at offset {4 + 4 * rank}, "
            f"expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist(root, split="train"):
    """Read the classic IDX pair; returns (images NCHW float32 in [0,1], labels)."""
    prefix = "train" if split == "train" else "t10k"
    img_path = os.path.join(root, f"{prefix}-images-idx3-ubyte")
    lbl_path = os.path.join(root, f"{prefix}-labels-idx1-ubyte")
    images = _read_idx(img_path, 0x00000803, 3)
    labels = _read_idx(lbl_path, 0x00000801, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{root}: {images.shape[0]} images vs {labels.shape[0]} labels")
    x = (images.astype(np.float32) / 255.0)[:, None, :, :]
    return x, labels.astype(np.int64)


# --------------------------------------------------------------------------
# CIFAR binary format (channel-planar rows)


def load_cifar(root, split="train", classes=10):
    """Read CIFAR-10/100 binary batches; returns (images NCHW float32, labels)."""
    if classes == 10:
        names = ([f"data_batch_{i}.bin" for i in range(1, 6)]
                 if split == "train" else ["test_batch.bin"])
        rec = 1 + 3072
        label_off = 0
    elif classes == 100:
        names = ["train.bin"] if split == "train" else ["test.bin"]
        rec = 2 + 3072
        label_off = 1  # coarse label byte precedes the fine label
    else:
        raise ValueError(f"classes must be 10 or 100, got {classes}")
    xs, ys = [], []
    for name in names:
        path = os.path.join(root, name)
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % rec:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a multiple of record size {rec}")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
        ys.append(arr[:, label_off].astype(np.int64))
        xs.append(arr[:, rec - 3072:].reshape(-1, 3, 32, 32))
    x = np.concatenate(xs).astype(np.float32) / 255.0
    return x, np.concatenate(ys)


# --------------------------------------------------------------------------
# Preprocessing and augmentation


def standardize(x):
    """Per-image zero mean / unit variance over all pixels and channels."""
    mean = x.mean(axis=(1, 2, 3), keepdims=True)
    std = x.std(axis=(1, 2, 3), keepdims=True)
    return (x - mean) / (std + STD_EPS)


def translate(x, dy, dx):
    """Shift by (dy, dx) pixels, zero-filling the vacated border."""
    out = np.zeros_like(x)
    h, w = x.shape[2], x.shape[3]
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    yd = slice(max(-dy, 0), h + min(-dy, 0))
    xd = slice(max(-dx, 0), w + min(-dx, 0))
    out[:, :, ys, xs] = x[:, :, yd, xd]
    return out


def _gaussian3(sigma):
    r = np.exp(-np.array([1.0, 0.0, 1.0]) / (2.0 * sigma * sigma))
    k = np.array([r[0], r[1], r[2]], dtype=np.float64)
    return (k / k.sum()).astype(np.float32)


def _blur3x3(x, sigma):
    """Separable 3x3 Gaussian with reflective edge padding."""
    k = _gaussian3(sigma)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (0, 0)), mode="reflect")
    y = k[0] * xp[:, :, :-2] + k[1] * xp[:, :, 1:-1] + k[2] * xp[:, :, 2:]
    yp = np.pad(y, ((0, 0), (0, 0), (0, 0), (1, 1)), mode="reflect")
    return k[0] * yp[:, :, :, :-2] + k[1] * yp[:, :, :, 1:-1] + k[2] * yp[:, :, :, 2:]


def augment(x, rng):
    """Random <=2 px translation plus 3x3 Gaussian blur, sigma ~ U(0.5, 1.5).

    Each image in the batch draws its own shift; the blur strength is drawn
    per batch (the kernel is shared so the op stays vectorized).
    """
    shifts = rng.integers(-2, 3, size=(x.shape[0], 2))
    out = np.empty_like(x)
    for (dy, dx) in {tuple(s) for s in map(tuple, shifts)}:
        sel = (shifts[:, 0] == dy) & (shifts[:, 1] == dx)
        out[sel] = translate(x[sel], dy, dx) if (dy or dx) else x[sel]
    sigma = float(rng.uniform(0.5, 1.5))
    return _blur3x3(out, sigma)


# --------------------------------------------------------------------------
# Dataset container


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray = field(default=None)
    test_y: np.ndarray = field(default=None)

    def __len__(self):
        return self.train_x.shape[0]

    def batches(self, batch_size, seed, augment=True):
        """Yield shuffled, standardized (x, y) training batches."""
        rng = np.random.default_rng(seed)
        order = rng.permutation(self.train_x.shape[0])
        do_augment = augment
        for lo in range(0, order.size, batch_size):
            idx = order[lo:lo + batch_size]
            xb = self.train_x[idx]
            if do_augment:
                xb = globals()["augment"](xb, rng)
            yield standardize(xb).astype(np.float32), self.train_y[idx]


def split_validation(x, y, fraction=0.1, seed=0):
    """Deterministic held-out split; returns (train_x, train_y, val_x, val_y)."""
    n = x.shape[0]
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(87,))).permutation(n)
    n_val = max(1, int(round(n * fraction)))
    val, tr = order[:n_val], order[n_val:]
    return x[tr], y[tr], x[val], y[val]


def load_dataset(name, root, val_fraction=0.1, seed=0):
    """Load 'mnist', 'cifar10', or 'cifar100' from `root` with a seeded
    validation split carved from the training set."""
    if name == "mnist":
        tx, ty = load_mnist(root, "train")
        ex, ey = load_mnist(root, "test")
    elif name in ("cifar10", "cifar100"):
        classes = 10 if name == "cifar10" else 100
        tx, ty = load_cifar(root, "train", classes)
        ex, ey = load_cifar(root, "test", classes)
    else:
        raise ValueError(f"unknown dataset {name!r}")
    trx, try_, vx, vy = split_validation(tx, ty, val_fraction, seed)
    return Dataset(trx, try_, vx, vy, ex, ey)

"""Binary checkpoint format.

Layout (all integers little-endian):

    8 bytes   magic b"SUBCNN\\x00\\x01"
    u32       format version (currently 1)
    u32       config text length, followed by that many UTF-8 bytes (YAML)
    u32       epoch
    u64       base RNG seed
    f64       lr_main, f64 lr_frontend  (optimizer rates)
    f64       best validation accuracy
    u32       epochs since last improvement
    u32       tensor count, then per tensor:
                  u16 name length + UTF-8 name
                  u8  dtype tag (1 = float32, 2 = float64, 3 = int64)
                  u8  rank, then rank x u32 dims
                  raw payload (C order)
    u32       CRC-32 of everything before it

Model parameters are stored under their parameter names; momentum buffers
under "velocity/<name>". Loading rebuilds the model from the embedded
config and fails loudly on magic, checksum, or config mismatch.
"""

import struct
import zlib

import numpy as np

from .config import config_to_yaml, load_config_text
from .model import build_model
from .train import OptimizerState

MAGIC = b"SUBCNN\x00\x01"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.int64): 3}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class CheckpointFormatError(Exception):
    """Malformed or truncated checkpoint file."""


class CheckpointIntegrityError(CheckpointFormatError):
    """Checksum mismatch — the file is corrupt."""


class CheckpointConfigError(Exception):
    """Checkpoint config does not match the requested model config."""


def _pack_tensor(name, arr):
    nb = name.encode("utf-8")
    dt = np.dtype(arr.dtype)
    if dt not in _DTYPE_TAGS:
        raise CheckpointFormatError(f"unsupported dtype {dt} for tensor {name}")
    head = struct.pack("<H", len(nb)) + nb
    head += struct.pack("<BB", _DTYPE_TAGS[dt], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(
                f"truncated checkpoint at offset {self.pos} (wanted {n} bytes)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(path, m, opt: OptimizerState, epoch, base_seed):
    config_text = config_to_yaml(m.config).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<I", len(config_text)) + config_text)
    parts.append(struct.pack("<IQ", int(epoch), int(base_seed) & (2 ** 64 - 1)))
    parts.append(struct.pack("<ddd", opt.lr_main, opt.lr_frontend, opt.best_val_acc))
    parts.append(struct.pack("<I", opt.epochs_since_improvement))

    tensors = [(n, m.params[n]) for n in sorted(m.params)]
    tensors += [(f"velocity/{n}", opt.velocity[n]) for n in sorted(opt.velocity)]
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        parts.append(_pack_tensor(name, arr))

    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path, expected_config=None):
    """Returns (model, optimizer_state, epoch, base_seed).

    If expected_config is given, its YAML form must match the embedded one.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8:
        raise CheckpointFormatError(f"{path}: too short to be a checkpoint")
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {raw[:8]!r}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch")

    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    (clen,) = r.unpack("<I")
    config_text = r.take(clen).decode("utf-8")
    epoch, base_seed = r.unpack("<IQ")
    lr_main, lr_frontend, best_val = r.unpack("<ddd")
    (since_improve,) = r.unpack("<I")

    cfg = load_config_text(config_text)
    if expected_config is not None and config_to_yaml(expected_config) != config_text:
        raise CheckpointConfigError(
            f"{path}: embedded config '{cfg.name}' does not match "
            f"requested config '{expected_config.name}'")

    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        tag, rank = r.unpack("<BB")
        if tag not in _TAG_DTYPES:
            raise CheckpointFormatError(f"{path}: unknown dtype tag {tag} for {name}")
        dims = r.unpack(f"<{rank}I")
        dt = _TAG_DTYPES[tag]
        n_bytes = int(np.prod(dims)) * dt.itemsize if rank else dt.itemsize
        tensors[name] = np.frombuffer(r.take(n_bytes), dtype=dt).reshape(dims).copy()

    m = build_model(cfg, seed=0)
    opt = OptimizerState.for_model(m, lr_main=lr_main)
    opt.lr_frontend = lr_frontend
    opt.best_val_acc = best_val
    opt.epochs_since_improvement = since_improve
    for name in m.params:
        if name not in tensors:
            raise CheckpointFormatError(f"{path}: missing tensor {name}")
        if tensors[name].shape != m.params[name].shape:
            raise CheckpointConfigError(
                f"{path}: tensor {name} shape {tensors[name].shape} != "
                f"model shape {m.params[name].shape}")
        m.params[name][...] = tensors[name]
        vkey = f"velocity/{name}"
        if vkey in tensors:
            opt.velocity[name][...] = tensors[vkey]
    return m, opt, epoch, base_seed

"""Quantization robustness harness.

Inputs use mid-tread rounding on the [0, 1] pixel range; weights use
per-tensor symmetric scaling. Values are snapped to the quantized grid but
kept in float32 — the point is to measure accuracy loss from reduced
precision, not to run integer arithmetic.
"""

import copy
import io

import numpy as np

from .model import Model
from .train import evaluate


def quantize_input(x, bits):
    """Mid-tread uniform quantizer with round-half-up on [0, 1]."""
    if bits >= 32:
        return x
    levels = float(2 ** bits - 1)
    return (np.floor(x * levels + 0.5) / levels).astype(x.dtype, copy=False)


def quantize_weights_tensor(w, bits):
    """Per-tensor symmetric quantization; 32-bit and all-zero tensors pass through."""
    if bits >= 32:
        return w
    m = float(np.max(np.abs(w)))
    if m == 0.0:
        return w
    qmax = float(2 ** (bits - 1) - 1)
    scale = m / qmax
    q = np.clip(np.floor(w / scale + 0.5), -qmax - 1, qmax)
    return (q * scale).astype(w.dtype, copy=False)


def quantize_model(m: Model, bits):
    """Return a copy of the model with every parameter tensor quantized."""
    qm = copy.deepcopy(m)
    for name in qm.params:
        qm.params[name] = quantize_weights_tensor(qm.params[name], bits)
    return qm


def quant_sweep(m: Model, images, labels, bit_widths=(32, 16, 8, 6, 4),
                target="both", standardize_fn=None, protocol="center"):
    """Evaluate top-1 accuracy across bit widths.

    target: 'input', 'weights', or 'both'. Returns rows of
    (target, bits, top1).
    """
    if target not in ("input", "weights", "both"):
        raise ValueError(f"unknown quantization target {target!r}")
    rows = []
    for bits in bit_widths:
        model = quantize_model(m, bits) if target in ("weights", "both") else m
        x = quantize_input(images, bits) if target in ("input", "both") else images
        acc = evaluate(model, x, labels, protocol=protocol,
                       standardize_fn=standardize_fn)
        rows.append((target, int(bits), float(acc)))
    return rows


def sweep_to_csv(rows):
    buf = io.StringIO()
    buf.write("target,bits,top1\n")
    for target, bits, top1 in rows:
        buf.write(f"{target},{bits},{top1:.4f}\n")
    return buf.getvalue()

"""Command-line interface.

Subcommands: train, eval, cost, quant, freq. Exit codes: 0 success,
1 usage error, 2 data/format error, 3 numeric failure (NaN).
All commands are deterministic given (flags, seed, input files); passing
--threads 1 forces the single-threaded numpy kernel path used by the
golden tests.
"""

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="1 forces the bit-reproducible single-threaded path")
    p.add_argument("--seed", type=int, default=0)


def _apply_threads(args):
    if getattr(args, "threads", None) == 1:
        os.environ["SUBCNN_BACKEND"] = "numpy"
    elif getattr(args, "threads", None) is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")


def build_parser():
    ap = _Parser(prog="subcnn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoints + CSV log")
    p.add_argument("--config", required=True, help="preset name or YAML path")
    p.add_argument("--data", help="dataset directory (omit for synthetic smoke data)")
    p.add_argument("--dataset", choices=["mnist", "cifar10", "cifar100"],
                   help="dataset format; inferred from the config when omitted")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--frontend", choices=["asd", "casd", "wsd"],
                   help="override the config's frontend mode")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--limit", type=int, help="cap the number of training images")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint, write a JSONL record")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dataset", choices=["mnist", "cifar10", "cifar100"])
    p.add_argument("--protocol", choices=["center", "five_patch"], default="center")
    p.add_argument("--out", help="JSONL file to append the result record to")
    p.add_argument("--split", choices=["test", "val"], default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--dump-activations",
                   help="write per-layer activation tensors for one batch to this .npz")
    _add_common(p)

    p = sub.add_parser("cost", help="analytic op-count report for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--baseline", help="config for the reduction columns")
    p.add_argument("--out", help="CSV path (table always prints to stdout)")
    _add_common(p)

    p = sub.add_parser("quant", help="quantization robustness sweep on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dataset", choices=["mnist", "cifar10", "cifar100"])
    p.add_argument("--target", choices=["input", "weights", "both"], default="both")
    p.add_argument("--bits", default="32,16,8,6,4", help="comma-separated bit widths")
    p.add_argument("--out", help="CSV path")
    p.add_argument("--limit", type=int)
    _add_common(p)

    p = sub.add_parser("freq", help="frontend filter frequency responses (CSV + PGM)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--node", default="all", help="'all' or comma-separated node ids")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    return ap


# --------------------------------------------------------------------------
# helpers


def _infer_dataset(cfg):
    c, _, _ = cfg.input_shape
    if c == 1:
        return "mnist"
    if cfg.classes == 100:
        return "cifar100"
    return "cifar10"


def _load_data(args, cfg, seed):
    from .data import load_dataset
    name = args.dataset or _infer_dataset(cfg)
    return load_dataset(name, args.data, seed=seed)


def _synthetic_dataset(cfg, seed, n=256):
    """Deterministic class-structured noise; used when --data is omitted."""
    from .data import Dataset
    c, h, w = cfg.input_shape
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(991,)))
    y = rng.integers(0, cfg.classes, size=n)
    x = rng.normal(0.5, 0.15, size=(n, c, h, w)).astype(np.float32)
    x += (y[:, None, None, None] / cfg.classes - 0.5) * 0.2
    x = np.clip(x, 0.0, 1.0)
    n_val = max(1, n // 10)
    return Dataset(x[n_val:], y[n_val:], x[:n_val], y[:n_val], x[:n_val], y[:n_val])


def _check_finite(value, what):
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite {what}: {value}")


def _limit(ds, n):
    if n:
        ds.train_x, ds.train_y = ds.train_x[:n], ds.train_y[:n]
    return ds


def write_pgm(path, arr):
    """8-bit binary PGM, min-max scaled."""
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros_like(a) if hi == lo else (a - lo) / (hi - lo)
    pix = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


# --------------------------------------------------------------------------
# commands


def cmd_train(args):
    from .checkpoint import load_checkpoint, save_checkpoint
    from .config import load_config
    from .model import build_model
    from .train import EpochRecord, OptimizerState, evaluate, lr_schedule, train_epoch
    from .data import standardize

    cfg = load_config(args.config, frontend_override=args.frontend)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.resume:
        m, opt, start_epoch, base_seed = load_checkpoint(args.resume, expected_config=cfg)
        if base_seed != args.seed:
            print(f"note: resuming with checkpoint seed {base_seed}", file=sys.stderr)
            args.seed = base_seed
    else:
        m = build_model(cfg, seed=args.seed)
        opt = OptimizerState.for_model(m, lr_main=args.lr)
        start_epoch = 0

    ds = (_load_data(args, cfg, args.seed) if args.data
          else _synthetic_dataset(cfg, args.seed))
    _limit(ds, args.limit)

    log_path = out / "train_log.csv"
    if not log_path.exists() or start_epoch == 0:
        log_path.write_text(EpochRecord.CSV_HEADER + "\n")
    val_acc = 0.0
    for epoch in range(start_epoch, start_epoch + args.epochs):
        t0 = time.time()
        loss, acc = train_epoch(m, ds, opt, args.seed, epoch,
                                batch_size=args.batch_size,
                                augment=not args.no_augment,
                                log=lambda s: print(s, file=sys.stderr))
        _check_finite(loss, "training loss")
        val_acc = 100.0 * evaluate(m, ds.val_x, ds.val_y, standardize_fn=standardize)
        rec = EpochRecord(epoch, loss, acc, val_acc, opt.lr_main, opt.lr_frontend,
                          time.time() - t0)
        with open(log_path, "a") as fh:
            fh.write(rec.csv_row() + "\n")
        lr_schedule(opt, val_acc)
        save_checkpoint(out / f"epoch{epoch:03d}.ckpt", m, opt, epoch + 1, args.seed)
        print(f"epoch {epoch}: loss {loss:.4f} train_acc {acc:.4f} val_acc {val_acc:.2f}%")
    print(f"final val accuracy: {val_acc:.2f}%")
    return EXIT_OK


def _eval_split(ds, split):
    return (ds.val_x, ds.val_y) if split == "val" else (ds.test_x, ds.test_y)


def cmd_eval(args):
    from .checkpoint import load_checkpoint
    from .data import standardize
    from .model import model_forward
    from .train import evaluate

    m, _, epoch, _ = load_checkpoint(args.checkpoint)
    ds = _load_data(args, m.config, args.seed)
    x, y = _eval_split(ds, args.split)
    if args.limit:
        x, y = x[:args.limit], y[:args.limit]

    topk = (1, 5) if m.config.classes >= 5 else (1,)
    accs = evaluate(m, x, y, protocol=args.protocol, topk=topk,
                    standardize_fn=standardize)
    if not isinstance(accs, dict):
        accs = {1: accs}
    for v in accs.values():
        _check_finite(v, "accuracy")
    record = {"checkpoint": args.checkpoint, "epoch": epoch,
              "protocol": args.protocol, "split": args.split, "n": int(x.shape[0]),
              "top1": accs[1]}
    if 5 in accs:
        record["top5"] = accs[5]
    line = json.dumps(record, sort_keys=True)
    print(line)
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(line + "\n")

    if args.dump_activations:
        from . import ops
        m.training = False
        xb = standardize(x[:min(8, x.shape[0])])
        logits, cache = model_forward(m, xb, seed=0)
        if not np.isfinite(logits).all():
            raise FloatingPointError("non-finite logits in activation dump")
        tensors = {"logits": logits}
        for p, pc in enumerate(cache["path_caches"]):
            for j, entry in enumerate(pc):
                if entry[0] == "conv":
                    tensors[f"path{p}/conv{j}"] = ops.leaky_relu(entry[2], 0.1)
        for j, (h, pre, _) in enumerate(cache["fc_caches"]):
            tensors[f"fc{j}"] = pre
        np.savez(args.dump_activations, **tensors)
        print(f"wrote {len(tensors)} activation tensors to {args.dump_activations}")
    return EXIT_OK


def cmd_cost(args):
    from .config import load_config
    from .cost import model_cost

    report = model_cost(load_config(args.config))
    baseline = model_cost(load_config(args.baseline)) if args.baseline else None
    print(report.to_text(baseline=baseline))
    if args.out:
        Path(args.out).write_text(report.to_csv())
    return EXIT_OK


def cmd_quant(args):
    from .checkpoint import load_checkpoint
    from .data import standardize
    from .quant import quant_sweep, sweep_to_csv

    try:
        bits = tuple(int(b) for b in args.bits.split(","))
    except ValueError as e:
        raise UsageError(f"bad --bits value: {args.bits!r}") from e
    if any(b < 1 for b in bits):
        raise UsageError("bit widths must be >= 1")

    m, _, _, _ = load_checkpoint(args.checkpoint)
    ds = _load_data(args, m.config, args.seed)
    x, y = ds.test_x, ds.test_y
    if args.limit:
        x, y = x[:args.limit], y[:args.limit]
    rows = quant_sweep(m, x, y, bit_widths=bits, target=args.target,
                       standardize_fn=standardize)
    for _, _, top1 in rows:
        _check_finite(top1, "top1")
    csv = sweep_to_csv(rows)
    print(csv, end="")
    if args.out:
        Path(args.out).write_text(csv)
    return EXIT_OK


def _frontend_kernels(m):
    """{node_id: [(branch_name, depthwise kernel), ...]} for every split node."""
    from .frontend import _node_axis, _wsd_kernels, node_layout

    spec = m.config.frontend
    out = {}
    for idx, level, _axis in node_layout(spec.depth):
        if spec.mode == "wsd":
            low, high = _wsd_kernels(spec, _node_axis(level), np.float32)
            out[idx] = [("U", low), ("L", high)]
        elif spec.mode == "casd":
            u = m.params[f"frontend/node{idx}/U"]
            delta = np.zeros_like(u)
            delta[:, 0, u.shape[2] // 2, u.shape[3] // 2] = 1.0
            out[idx] = [("U", u), ("L", delta - u)]  # complement branch: X - U*X
        else:
            out[idx] = [("U", m.params[f"frontend/node{idx}/U"]),
                        ("L", m.params[f"frontend/node{idx}/L"])]
    return out


def cmd_freq(args):
    from .checkpoint import load_checkpoint
    from .frontend import frequency_response

    m, _, _, _ = load_checkpoint(args.checkpoint)
    if m.config.frontend is None:
        raise UsageError("checkpoint has no decomposition frontend")
    if args.grid < 4:
        raise UsageError("--grid must be >= 4")
    kernels = _frontend_kernels(m)
    if args.node == "all":
        node_ids = sorted(kernels)
    else:
        try:
            node_ids = [int(v) for v in args.node.split(",")]
        except ValueError as e:
            raise UsageError(f"bad --node value {args.node!r}; "
                             f"valid ids: {sorted(kernels)}") from e
        bad = [i for i in node_ids if i not in kernels]
        if bad:
            raise UsageError(f"unknown node ids {bad}; valid ids: {sorted(kernels)}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for idx in node_ids:
        for branch, kernel in kernels[idx]:
            freqs, mags = frequency_response(kernel, args.grid)
            for c in range(mags.shape[0]):
                stem = f"node{idx}_{branch}_ch{c}"
                write_pgm(out / f"{stem}.pgm", mags[c])
                with open(out / f"{stem}.csv", "w") as fh:
                    fh.write("fy_over_pi," + ",".join(f"{f:.6f}" for f in freqs) + "\n")
                    for r in range(mags.shape[1]):
                        fh.write(f"{freqs[r]:.6f}," +
                                 ",".join(f"{v:.6f}" for v in mags[c, r]) + "\n")
                written += 2
    print(f"wrote {written} files to {out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "cost": cmd_cost,
            "quant": cmd_quant, "freq": cmd_freq}


def main(argv=None):
    from .checkpoint import CheckpointConfigError, CheckpointFormatError
    from .data import DataFormatError
    from .model import ConfigError

    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        _apply_threads(args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, CheckpointFormatError, CheckpointConfigError,
            FileNotFoundError, IsADirectoryError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

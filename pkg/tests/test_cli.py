"""End-to-end CLI behavior: artifacts, determinism, resume, exit codes."""

import json

import numpy as np
import pytest

from subcnn.cli import main

TINY = """\
name: cli-tiny
arch: msr
input: {channels: 1, height: 28, width: 28}
classes: 10
frontend: {mode: asd, depth: 1, order: 3}
layers:
  - conv: {k: 3, out: 2}
  - pool
fc_hidden: [16]
dropout: 0.5
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return str(p)


def _train(cfg, data, out, *extra):
    return main(["train", "--config", cfg, "--data", data, "--out", out,
                 "--seed", "3", "--epochs", "1", "--threads", "1",
                 "--batch-size", "32", *extra])


def test_train_smoke_writes_artifacts(tiny_cfg, mnist_dir, tmp_path):
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    assert (out / "epoch000.ckpt").exists()
    log = (out / "train_log.csv").read_text().strip().splitlines()
    assert log[0].startswith("epoch,train_loss,train_acc,val_acc")
    assert len(log) == 2  # header + one epoch row


def test_identical_seeds_bit_identical_checkpoints(tiny_cfg, mnist_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _train(tiny_cfg, mnist_dir, str(a)) == 0
    assert _train(tiny_cfg, mnist_dir, str(b)) == 0
    assert (a / "epoch000.ckpt").read_bytes() == (b / "epoch000.ckpt").read_bytes()


def test_resume_equivalence(tiny_cfg, mnist_dir, tmp_path):
    full, part = tmp_path / "full", tmp_path / "part"
    assert main(["train", "--config", tiny_cfg, "--data", mnist_dir,
                 "--out", str(full), "--seed", "3", "--epochs", "2",
                 "--threads", "1", "--batch-size", "32"]) == 0
    assert _train(tiny_cfg, mnist_dir, str(part)) == 0
    assert main(["train", "--config", tiny_cfg, "--data", mnist_dir,
                 "--out", str(part), "--seed", "3", "--epochs", "1",
                 "--threads", "1", "--batch-size", "32",
                 "--resume", str(part / "epoch000.ckpt")]) == 0
    # the resumed epoch-1 metrics and checkpoint match the uninterrupted run
    full_rows = (full / "train_log.csv").read_text().strip().splitlines()
    part_rows = (part / "train_log.csv").read_text().strip().splitlines()
    strip_time = lambda row: ",".join(row.split(",")[:-1])
    assert strip_time(full_rows[2]) == strip_time(part_rows[2])
    assert ((full / "epoch001.ckpt").read_bytes()
            == (part / "epoch001.ckpt").read_bytes())


def test_wsd_frontend_frozen_across_checkpoints(tiny_cfg, mnist_dir, tmp_path):
    from subcnn.checkpoint import load_checkpoint
    out = tmp_path / "wsd"
    assert main(["train", "--config", tiny_cfg, "--data", mnist_dir,
                 "--out", str(out), "--seed", "3", "--epochs", "2",
                 "--threads", "1", "--batch-size", "32",
                 "--frontend", "wsd"]) == 0
    m0, _, _, _ = load_checkpoint(out / "epoch000.ckpt")
    m1, _, _, _ = load_checkpoint(out / "epoch001.ckpt")
    assert m0.config.frontend.mode == "wsd"
    assert m0.frontend_param_names() == [] == m1.frontend_param_names()
    # the fixed wavelet tree behaves identically in both checkpoints
    x = np.random.default_rng(0).random((1, 1, 28, 28)).astype(np.float32)
    from subcnn.frontend import decompose
    s0, _ = decompose(x, m0.frontend_state)
    s1, _ = decompose(x, m1.frontend_state)
    for a, b in zip(s0, s1):
        assert np.array_equal(a, b)


def test_eval_jsonl_record(tiny_cfg, mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    rec_path = tmp_path / "eval.jsonl"
    assert main(["eval", "--checkpoint", str(out / "epoch000.ckpt"),
                 "--data", mnist_dir, "--protocol", "five_patch",
                 "--out", str(rec_path), "--threads", "1"]) == 0
    rec = json.loads(rec_path.read_text().strip())
    assert rec["protocol"] == "five_patch" and rec["n"] == 48
    assert 0.0 <= rec["top1"] <= rec["top5"] <= 1.0


def test_eval_dump_activations(tiny_cfg, mnist_dir, tmp_path):
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    npz = tmp_path / "acts.npz"
    assert main(["eval", "--checkpoint", str(out / "epoch000.ckpt"),
                 "--data", mnist_dir, "--dump-activations", str(npz),
                 "--threads", "1"]) == 0
    acts = np.load(npz)
    assert "logits" in acts and any(k.startswith("path0/conv") for k in acts)


def test_cost_command_csv(tmp_path, capsys):
    csv_path = tmp_path / "cost.csv"
    assert main(["cost", "--config", "imagenet-msr-1l",
                 "--baseline", "imagenet-bcnn", "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "layer,mults,adds,macs,aux_adds"
    out = capsys.readouterr().out
    assert "reduction" in out


def test_quant_command_csv(tiny_cfg, mnist_dir, tmp_path):
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    csv_path = tmp_path / "q.csv"
    assert main(["quant", "--checkpoint", str(out / "epoch000.ckpt"),
                 "--data", mnist_dir, "--bits", "32,8",
                 "--target", "input", "--out", str(csv_path),
                 "--threads", "1"]) == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "target,bits,top1" and len(lines) == 3


def test_freq_command_outputs(tiny_cfg, mnist_dir, tmp_path):
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    freq_dir = tmp_path / "freq"
    assert main(["freq", "--checkpoint", str(out / "epoch000.ckpt"),
                 "--out", str(freq_dir), "--grid", "16"]) == 0
    pgms = sorted(freq_dir.glob("*.pgm"))
    csvs = sorted(freq_dir.glob("*.csv"))
    assert len(pgms) == 6 and len(csvs) == 6  # 3 split nodes x {U, L}
    assert pgms[0].read_bytes().startswith(b"P5\n16 16\n255\n")
    header = csvs[0].read_text().splitlines()[0].split(",")
    freqs = [float(v) for v in header[1:]]
    assert min(freqs) >= -1.0 and max(freqs) <= 1.0  # normalized to pi


def test_exit_codes(tiny_cfg, mnist_dir, tmp_path):
    # usage: unknown frontend node selector
    out = tmp_path / "run"
    assert _train(tiny_cfg, mnist_dir, str(out)) == 0
    ckpt = str(out / "epoch000.ckpt")
    assert main(["freq", "--checkpoint", ckpt, "--out", str(tmp_path / "f"),
                 "--node", "42"]) == 1
    assert main(["quant", "--checkpoint", ckpt, "--data", mnist_dir,
                 "--bits", "eight"]) == 1
    # data: missing dataset directory / corrupt checkpoint
    assert main(["train", "--config", tiny_cfg, "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "x"), "--epochs", "1"]) == 2
    raw = bytearray((out / "epoch000.ckpt").read_bytes())
    raw[-2] ^= 0xFF
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    assert main(["eval", "--checkpoint", str(bad), "--data", mnist_dir]) == 2
    # numeric: absurd learning rate drives the loss to NaN
    assert main(["train", "--config", tiny_cfg, "--data", mnist_dir,
                 "--out", str(tmp_path / "nan"), "--epochs", "1",
                 "--threads", "1", "--lr", "1e18"]) == 3

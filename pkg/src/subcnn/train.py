"""SGD-with-momentum training loop and evaluation protocols.

Update rule per parameter group (main CNN vs frontend, the frontend group
running at a lower rate):

    V <- 0.9 V - wd * lr * W - lr * g_bar
    W <- W + V

with g_bar the batch-averaged gradient. The learning rate drops by 10x
when validation accuracy stops improving (plateau schedule). All
stochasticity (shuffles, augmentation, dropout) derives from
(seed, epoch, batch) so runs are reproducible and resumable.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import translate
from .model import Model, model_backward, model_forward

MOMENTUM = 0.9
WEIGHT_DECAY = 0.0005


@dataclass
class OptimizerState:
    lr_main: float = 0.01
    lr_frontend: float = 0.001          # 0.1x the main rate
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    patience: int = 3
    lr_floor: float = 1e-5
    improvement_threshold: float = 0.1  # percentage points
    velocity: dict = field(default_factory=dict)
    best_val_acc: float = -1.0
    epochs_since_improvement: int = 0

    @classmethod
    def for_model(cls, m: Model, lr_main=0.01, **kw):
        st = cls(lr_main=lr_main, lr_frontend=0.1 * lr_main, **kw)
        st.init_velocity(m)
        return st

    def init_velocity(self, m: Model):
        for name, p in m.params.items():
            self.velocity[name] = np.zeros_like(p)


def sgd_step(m: Model, grads, st: OptimizerState):
    """Apply one update; frontend params use the frontend group lr.

    WSD frontends own no entries in m.params, so their fixed filters are
    never touched.
    """
    for name, w in m.params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != w.shape:
            raise ops.ShapeError(f"gradient shape {g.shape} != param {name} shape {w.shape}")
        lr = st.lr_frontend if name.startswith("frontend/") else st.lr_main
        v = st.velocity[name]
        v *= st.momentum
        v -= (st.weight_decay * lr) * w
        v -= lr * g.astype(w.dtype, copy=False)
        w += v


def lr_schedule(st: OptimizerState, val_acc):
    """Divide both group rates by 10 after `patience` flat epochs."""
    if val_acc > st.best_val_acc + st.improvement_threshold:
        st.best_val_acc = val_acc
        st.epochs_since_improvement = 0
        return st
    st.epochs_since_improvement += 1
    if st.epochs_since_improvement >= st.patience:
        st.lr_main = max(st.lr_main / 10.0, st.lr_floor)
        st.lr_frontend = max(st.lr_frontend / 10.0, st.lr_floor)
        st.epochs_since_improvement = 0
    return st


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    lr_main: float
    lr_frontend: float
    seconds: float

    CSV_HEADER = "epoch,train_loss,train_acc,val_acc,lr_main,lr_frontend,seconds"

    def csv_row(self):
        return (f"{self.epoch},{self.train_loss:.6f},{self.train_acc:.4f},"
                f"{self.val_acc:.4f},{self.lr_main:.6g},{self.lr_frontend:.6g},"
                f"{self.seconds:.2f}")


def _batch_seed(seed, epoch, batch):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(epoch, batch))
    return int(ss.generate_state(1, np.uint64)[0])


def train_epoch(m: Model, dataset, st: OptimizerState, seed, epoch,
                batch_size=64, augment=True, log=None):
    """One pass over dataset's training split; returns (loss, accuracy)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    m.training = True
    total_loss, correct, seen = 0.0, 0, 0
    t0 = time.time()
    for bi, (xb, yb) in enumerate(dataset.batches(batch_size,
                                                  seed=_batch_seed(seed, epoch, 0),
                                                  augment=augment)):
        bseed = _batch_seed(seed, epoch, bi + 1)
        logits, cache = model_forward(m, xb, seed=bseed)
        loss, dlogits = ops.softmax_cross_entropy(logits, yb)
        grads, _ = model_backward(m, cache, dlogits)
        sgd_step(m, grads, st)
        n = xb.shape[0]
        total_loss += loss * n
        correct += int((logits.argmax(axis=1) == yb).sum())
        seen += n
        if log is not None and bi % 50 == 0:
            log(f"  batch {bi}: loss {loss:.4f} acc {correct / max(seen, 1):.4f} "
                f"({time.time() - t0:.0f}s)")
    return total_loss / seen, correct / seen


FIVE_PATCH_SHIFTS = ((0, 0), (-2, -2), (-2, 2), (2, -2), (2, 2))


def evaluate(m: Model, images, labels, protocol="center", batch_size=256,
             topk=(1,), standardize_fn=None):
    """Top-k accuracy. five_patch averages softmax over center plus four
    2-px corner translations (the small-image analog of corner crops)."""
    m.training = False
    hits = {k: 0 for k in topk}
    shifts = FIVE_PATCH_SHIFTS if protocol == "five_patch" else ((0, 0),)
    for lo in range(0, images.shape[0], batch_size):
        xb = images[lo:lo + batch_size]
        yb = labels[lo:lo + batch_size]
        probs = None
        for dy_, dx_ in shifts:
            view = translate(xb, dy_, dx_) if (dy_ or dx_) else xb
            if standardize_fn is not None:
                view = standardize_fn(view)
            logits, _ = model_forward(m, view, seed=0)
            p = ops.softmax(logits)
            probs = p if probs is None else probs + p
        probs /= len(shifts)
        order = np.argsort(-probs, axis=1)
        for k in topk:
            hits[k] += int((order[:, :k] == yb[:, None]).any(axis=1).sum())
    n = images.shape[0]
    accs = {k: hits[k] / n for k in topk}
    return accs[1] if topk == (1,) else accs

"""Training: chronological leakage-free splits, the two-step strategy
(generalized pre-training on other participants, then per-subject QAT
fine-tuning), Adam optimization with early stopping, and the F1 metric.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import models as M
from . import stream as S
from . import tensor as T
from .errors import ConfigError, TrainingError
from .tensor import Tensor

VALID_BATCH_SIZES = (16, 32, 48)
LR_BOUNDS = (1e-5, 1e-3)


@dataclass(frozen=True)
class TrainConfig:
    bs: int = 32
    lr: float = 1e-3
    epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.bs not in VALID_BATCH_SIZES:
            raise ConfigError(f"batch size must be one of {VALID_BATCH_SIZES}, got {self.bs}")
        if not (LR_BOUNDS[0] <= self.lr <= LR_BOUNDS[1]):
            raise ConfigError(f"learning rate must be in {LR_BOUNDS}, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")


def f1_score(predictions, labels, positive_class=1):
    """Harmonic mean of precision and recall; 0 when there are no TPs."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0 or predictions.shape != labels.shape:
        raise ConfigError("f1_score needs equal-length, non-empty inputs")
    tp = int(np.sum((predictions == positive_class) & (labels == positive_class)))
    fp = int(np.sum((predictions == positive_class) & (labels != positive_class)))
    fn = int(np.sum((predictions != positive_class) & (labels == positive_class)))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


# ---------------------------------------------------------------------------
# windows and splits


@dataclass(frozen=True)
class LabeledWindow:
    data: np.ndarray     # (3, n)
    label: int           # 0 = forefoot, 1 = heel
    participant: str
    segment: int         # index of the source segment
    start: int           # raw-sample interval [start, end) within the segment
    end: int


@dataclass(frozen=True)
class Split:
    train: tuple
    val: tuple
    test: tuple


def windows_by_participant(segments, stream_cfg):
    """Windows per participant, chronological, never straddling segments."""
    out = {}
    for si, seg in enumerate(segments):
        wins = S.make_windows(seg.acc, stream_cfg)
        lst = out.setdefault(seg.participant, [])
        for w in wins:
            lst.append(LabeledWindow(w.data, seg.label_index, seg.participant,
                                     si, w.start, w.end))
    return out


def split_participant(windows, ratios=(0.7, 0.1, 0.2), seed=0):
    """Chronological 70/10/20 split (earliest train, then val, then test).

    Chronological blocks avoid the leakage a random split would create
    with overlapping windows. `seed` is accepted for interface stability
    but unused: the split is deterministic in the window order.
    """
    del seed
    n = len(windows)
    if n < 10:
        raise ConfigError(f"need at least 10 windows to split, got {n}")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r <= 0 for r in ratios):
        raise ConfigError(f"ratios must be positive and sum to 1, got {ratios}")
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * (ratios[0] + ratios[1]))) - n_train
    return Split(tuple(range(0, n_train)),
                 tuple(range(n_train, n_train + n_val)),
                 tuple(range(n_train + n_val, n)))


def to_xy(windows, idxs=None):
    if idxs is not None:
        windows = [windows[i] for i in idxs]
    if not windows:
        return np.zeros((0, 3, 1)), np.zeros(0, dtype=np.int64)
    X = np.stack([w.data for w in windows])
    y = np.array([w.label for w in windows], dtype=np.int64)
    return X, y


# ---------------------------------------------------------------------------
# optimization


class Adam:
    """Adam with fixed betas (0.9, 0.999) and no weight decay."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def _snapshot(model):
    return ({k: v.data.copy() for k, v in model.params.items()},
            {k: {"mean": s["mean"].copy(), "var": s["var"].copy()}
             for k, s in model.bn_stats.items()})


def _restore(model, snap):
    params, stats = snap
    for k, v in params.items():
        model.params[k].data = v.copy()
    for k, s in stats.items():
        model.bn_stats[k]["mean"][:] = s["mean"]
        model.bn_stats[k]["var"][:] = s["var"]


def _eval_f1(model, X, y, fq):
    if X.shape[0] == 0:
        return 0.0
    logits = model._float_forward(Tensor(X), bn_mode="eval", fq=fq).data
    return f1_score(logits.argmax(axis=1), y)


def fit(model, train_xy, val_xy, train_config, fq=False):
    """Optimize; keep the best-validation-F1 checkpoint. Returns a log."""
    Xtr, ytr = train_xy
    Xval, yval = val_xy
    if Xtr.shape[0] == 0:
        raise ConfigError("empty training set")
    rng = np.random.default_rng(train_config.seed)
    opt = Adam([p for p in model.params.values()], train_config.lr)
    best = _snapshot(model)
    best_f1 = _eval_f1(model, Xval, yval, fq)
    stale = 0
    log = []
    t0 = time.monotonic()
    for epoch in range(train_config.epochs):
        order = rng.permutation(Xtr.shape[0])
        losses = []
        for i in range(0, len(order), train_config.bs):
            idx = order[i:i + train_config.bs]
            opt.zero_grad()
            with T.Tape() as tape:
                logits = model.train_forward(Tensor(Xtr[idx]), fq=fq,
                                             observe=fq, bn_mode="train")
                loss = T.cross_entropy_logits(logits, ytr[idx])
                tape.backward(loss)
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise TrainingError(f"loss diverged (non-finite) at epoch {epoch}")
            losses.append(lval)
            opt.step()
        val_f1 = _eval_f1(model, Xval, yval, fq)
        log.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                    "val_f1": val_f1, "wall_time": time.monotonic() - t0})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best = _snapshot(model)
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break
    _restore(model, best)
    return log


# ---------------------------------------------------------------------------
# the two-step strategy


def train_generalized(model_config, train_config, per_participant, held_out_id,
                      ratios=(0.7, 0.1, 0.2)):
    """Pre-train on every participant except `held_out_id` (float path).

    `per_participant` maps participant id -> chronological LabeledWindows
    (see windows_by_participant). Returns (model, log).
    """
    if held_out_id not in per_participant:
        raise ConfigError(f"unknown held-out participant {held_out_id!r}")
    others = [pid for pid in sorted(per_participant) if pid != held_out_id]
    if not others:
        raise ConfigError("need at least 2 participants for generalized training")
    train_w, val_w = [], []
    for pid in others:
        wins = per_participant[pid]
        sp = split_participant(wins, ratios)
        train_w += [wins[i] for i in sp.train]
        val_w += [wins[i] for i in sp.val]
    model = M.build(model_config, seed=train_config.seed)
    log = fit(model, to_xy(train_w), to_xy(val_w), train_config, fq=False)
    return model, log


def finetune_qat(model, windows, split, train_config):
    """Per-subject QAT fine-tuning, then freeze to the integer twin.

    With zero epochs the weights are untouched; activation ranges are
    still calibrated and the integer twin attached. Returns (model, log).
    """
    Xtr, ytr = to_xy(windows, split.train)
    Xval, yval = to_xy(windows, split.val)
    if Xtr.shape[0] == 0:
        raise ConfigError("empty fine-tuning training split")
    # prime the activation observers before the first fake-quant epoch
    model._float_forward(Tensor(Xtr), bn_mode="eval", fq=True, observe=True)
    log = []
    if train_config.epochs > 0:
        log = fit(model, (Xtr, ytr), (Xval, yval), train_config, fq=True)
    model.freeze(Xtr)
    return model, log


def evaluate(model, windows, idxs, mode="int"):
    """Test-set F1 for one forward mode."""
    X, y = to_xy(windows, idxs)
    if X.shape[0] == 0:
        raise ConfigError("empty evaluation split")
    logits = model.forward(X, mode=mode)
    return f1_score(np.asarray(logits).argmax(axis=1), y)

"""Mini-batch training with plateau learning-rate decay and best-validation checkpointing."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ..imagecore import unsharp_array, downsample2_array
from .loss import weighted_bce, weighted_bce_grad
from .optim import AdamState, adam_step
from .unet import UNetModel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, history: "TrainHistory"):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    defect_weight: float = 3.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_steps: int = 2500
    decay_factor: float = 0.5
    max_steps: int = 10000
    val_interval: int = 250
    checkpoint_best: bool = True
    unsharp_sigma: float = 2.0
    unsharp_amount: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.defect_weight > 0:
            raise ValueError("defect_weight must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr_events: list[tuple[int, float]] = field(default_factory=list)
    best_step: int | None = None

    @property
    def best_val_loss(self) -> float | None:
        return min(self.val_loss) if self.val_loss else None

    def to_csv(self) -> str:
        """Rows ``step,train_loss,val_loss,lr``; empty cells where not recorded."""
        val = dict(zip(self.val_steps, self.val_loss))
        lr_at = {}
        for step, lr in self.lr_events:
            lr_at[step] = lr
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "train_loss", "val_loss", "lr"])
        steps = sorted(set(range(1, len(self.train_loss) + 1)) | set(val) | set(lr_at))
        for s in steps:
            tl = self.train_loss[s - 1] if 1 <= s <= len(self.train_loss) else ""
            w.writerow([s, _fmt(tl), _fmt(val.get(s, "")), _fmt(lr_at.get(s, ""))])
        return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if v != "" else ""


def preprocess_patch(image: np.ndarray, mask: np.ndarray, sigma: float = 2.0,
                     amount: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Two-plane input at half resolution plus the matching target.

    The target marks a half-resolution pixel as defect when any of its four
    source pixels is a defect.
    """
    stack = np.stack([image, unsharp_array(image, sigma, amount)])
    x = downsample2_array(stack)
    h, w = mask.shape
    y = mask.reshape(h // 2, 2, w // 2, 2).any(axis=(1, 3))
    return x.astype(np.float32), y[None].astype(np.float32)


def patches_to_arrays(patches, sigma: float = 2.0, amount: float = 1.0):
    """Stack patches into ``(N, 2, S, S)`` inputs and ``(N, 1, S, S)`` targets."""
    xs, ys = [], []
    for p in patches:
        x, y = preprocess_patch(p.image.pixels, p.mask.bits, sigma, amount)
        xs.append(x)
        ys.append(y)
    return np.stack(xs), np.stack(ys)


def _batches(n: int, batch: int, rng: np.random.Generator):
    """Endless shuffled index batches; a short final batch wraps to the epoch start."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            if len(idx) < batch:
                idx = np.concatenate([idx, np.resize(order, batch - len(idx))])
            yield idx


def evaluate_loss(model: UNetModel, x: np.ndarray, y: np.ndarray, w: float,
                  batch: int = 32) -> float:
    total = 0.0
    for s in range(0, len(x), batch):
        p = model.forward(x[s:s + batch], record=False)
        total += weighted_bce(p, y[s:s + batch], w) * len(p)
    return total / len(x)


def train(model: UNetModel, train_data, val_data, cfg: TrainConfig | None = None,
          progress=None) -> tuple[UNetModel, TrainHistory]:
    """Train ``model`` in place and return the best-validation snapshot.

    ``train_data``/``val_data`` are either lists of patches or ``(x, y)``
    array pairs from :func:`patches_to_arrays`.
    """
    cfg = cfg or TrainConfig()
    history = TrainHistory()
    if cfg.max_steps == 0:
        return model, history
    xt, yt = _as_arrays(train_data, cfg)
    xv, yv = _as_arrays(val_data, cfg)
    if len(xt) == 0 or len(xv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    dtype = next(iter(model.params.values())).dtype
    xt, yt, xv, yv = (a.astype(dtype, copy=False) for a in (xt, yt, xv, yv))
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    lr = cfg.lr
    history.lr_events.append((0, lr))
    best = model.copy()
    best_loss = np.inf
    since_best = 0
    batches = _batches(len(xt), cfg.batch_size, rng)
    for step in range(1, cfg.max_steps + 1):
        idx = next(batches)
        xb, yb = xt[idx], yt[idx]
        pred = model.forward(xb)
        loss = weighted_bce(pred, yb, cfg.defect_weight)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at step {step}", history)
        history.train_loss.append(loss)
        grads = model.backward(weighted_bce_grad(pred, yb, cfg.defect_weight))
        adam_step(model.params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
        since_best += 1
        if step % cfg.val_interval == 0 or step == cfg.max_steps:
            vl = evaluate_loss(model, xv, yv, cfg.defect_weight, cfg.batch_size)
            if not np.isfinite(vl):
                raise TrainingError(f"non-finite validation loss at step {step}", history)
            history.val_steps.append(step)
            history.val_loss.append(vl)
            if vl < best_loss:
                best_loss = vl
                since_best = 0
                history.best_step = step
                if cfg.checkpoint_best:
                    best = model.copy()
            if progress:
                progress(step, loss, vl, lr)
        if since_best >= cfg.plateau_steps:
            lr *= cfg.decay_factor
            since_best = 0
            history.lr_events.append((step, lr))
            log.info("step %d: validation plateau, lr -> %g", step, lr)
    if not cfg.checkpoint_best:
        best = model
    return best, history


def _as_arrays(data, cfg: TrainConfig):
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        return data
    return patches_to_arrays(list(data), cfg.unsharp_sigma, cfg.unsharp_amount)

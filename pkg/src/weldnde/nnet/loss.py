from __future__ import annotations

import numpy as np

from .ops import ShapeError

PRED_EPS = 1e-7


def weighted_bce(pred: np.ndarray, target: np.ndarray, w: float = 3.0) -> float:
    """Mean of ``-(w*y*ln p + (1-y)*ln(1-p))`` with ``p`` clamped to [eps, 1-eps]."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    y = target.astype(pred.dtype if pred.dtype.kind == "f" else np.float64)
    p = np.clip(pred, PRED_EPS, 1.0 - PRED_EPS)
    terms = w * y * np.log(p) + (1.0 - y) * np.log1p(-p)
    return float(-terms.mean(dtype=np.float64))


def weighted_bce_grad(pred: np.ndarray, target: np.ndarray, w: float = 3.0) -> np.ndarray:
    """Gradient of :func:`weighted_bce` with respect to ``pred``.

    Zero where the clamp is active, matching the loss exactly.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    y = target.astype(pred.dtype)
    inside = (pred > PRED_EPS) & (pred < 1.0 - PRED_EPS)
    p = np.clip(pred, PRED_EPS, 1.0 - PRED_EPS)
    g = -(w * y / p - (1.0 - y) / (1.0 - p)) / pred.size
    return (g * inside).astype(pred.dtype, copy=False)

"""Sizing error, weld length and false-call rates, k-fold splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from ..seeding import mix_seed


class EmptyMetricError(ValueError):
    """No matched hits to compute a sizing metric from."""


class InconsistencyError(ValueError):
    """Inside-weld false calls reported on images without weld length."""


@dataclass(frozen=True)
class SizingError:
    mean: float
    rms: float
    residuals: tuple[float, ...]


def sizing_error(records) -> SizingError:
    """Residual = predicted size - true size (mm) over hits."""
    res = [r.matched_pred_size - r.true_size for r in records if r.hit]
    if not res:
        raise EmptyMetricError("sizing error needs at least one hit")
    a = np.array(res)
    return SizingError(float(a.mean()), float(np.sqrt(np.mean(a * a))), tuple(map(float, a)))


def skeleton_length_px(mask: np.ndarray) -> float:
    """Length of the mask's medial skeleton in pixels.

    The mask is edge-extended before skeletonising so that a band running off
    the image keeps its full length; orthogonal steps count 1, diagonal steps
    sqrt(2), and each skeleton component contributes one extra pixel so that
    a straight run of ``n`` pixels measures ``n``.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return 0.0
    pad = max(m.shape) // 2 + 2
    sk = skeletonize(np.pad(m, pad, mode="edge"))[pad:-pad, pad:-pad]
    return _path_length(sk)


def _path_length(sk: np.ndarray) -> float:
    s = sk
    orth = int(np.sum(s[:, :-1] & s[:, 1:]) + np.sum(s[:-1, :] & s[1:, :]))
    a, b, c, d = s[:-1, :-1], s[:-1, 1:], s[1:, :-1], s[1:, 1:]
    diag = int(np.sum(a & d & ~b & ~c) + np.sum(b & c & ~a & ~d))
    _, n = ndimage.label(s, structure=np.ones((3, 3), dtype=bool))
    return orth + math.sqrt(2.0) * diag + n


def weld_length_mm(weld_masks, pixel_pitch: float) -> float:
    return sum(skeleton_length_px(m) for m in weld_masks) * pixel_pitch


@dataclass(frozen=True)
class FalseCallRates:
    per_10cm_weld: float
    per_image: float
    weld_length_mm: float
    inside: int
    total: int


def false_call_rates(false_calls, weld_masks, n_images: int, pixel_pitch: float,
                     weld_length: float | None = None) -> FalseCallRates:
    """Inside-weld false calls per 100 mm of weld and all false calls per image.

    ``weld_length`` (mm) overrides the skeleton measurement when given.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    inside = sum(1 for f in false_calls if f.inside_weld)
    total = len(false_calls)
    length = weld_length_mm(weld_masks, pixel_pitch) if weld_length is None else float(weld_length)
    if length <= 0:
        if inside:
            raise InconsistencyError("inside-weld false calls but zero weld length")
        per_10 = 0.0
    else:
        per_10 = 100.0 * inside / length
    return FalseCallRates(per_10, total / n_images, length, inside, total)


def kfold_split(n_images, k: int = 5, seed: int = 0) -> list[list[int]]:
    """Seeded shuffle cut into ``k`` near-equal folds (sizes differ by at most one)."""
    n = n_images if isinstance(n_images, int) else len(n_images)
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} images into {k} folds")
    order = np.random.default_rng(mix_seed(seed, 23)).permutation(n)
    return [sorted(int(i) for i in part) for part in np.array_split(order, k)]

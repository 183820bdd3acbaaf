"""Hit/miss matching of predicted indications against per-flaw truth masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

HIT_DILATION_PX = 2


@dataclass(frozen=True)
class HitMissRecord:
    true_size: float  # mm
    hit: bool
    matched_pred_size: float | None = None  # mm, present iff hit
    image_id: str = ""
    fold_id: str = ""

    def __post_init__(self):
        if not self.true_size > 0:
            raise ValueError("true size must be positive")
        if self.hit != (self.matched_pred_size is not None):
            raise ValueError("matched_pred_size must be given exactly for hits")


@dataclass(frozen=True)
class FalseCall:
    index: int  # position in the predicted indication list
    size_mm: float
    inside_weld: bool
    image_id: str = ""


def disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def match_indications(predicted, truth_masks, truth_sizes, weld_mask: np.ndarray,
                      image_id: str = "", fold_id: str = "",
                      dilation: int = HIT_DILATION_PX) -> tuple[list[HitMissRecord], list[FalseCall]]:
    """Score each true flaw as hit/miss and each predicted indication as matched or false call.

    ``predicted`` is a sequence of indications (anything with ``pixels`` as
    ``(n, 2)`` row/col and ``size_mm``); ``truth_masks`` are boolean rasters,
    one per flaw, with ``truth_sizes`` in mm. A flaw is hit when any predicted
    pixel falls inside its mask dilated by a ``dilation`` px disk; a
    predicted indication touching several dilated flaws credits them all.
    """
    weld = np.asarray(weld_mask, dtype=bool)
    shape = weld.shape
    if len(truth_masks) != len(truth_sizes):
        raise ValueError("one size per truth mask is required")
    for m in truth_masks:
        if np.shape(m) != shape:
            raise ValueError(f"truth mask shape {np.shape(m)} does not match frame {shape}")
    for d in predicted:
        px = np.asarray(d.pixels)
        if len(px) and (px.min() < 0 or px[:, 0].max() >= shape[0] or px[:, 1].max() >= shape[1]):
            raise ValueError("predicted indication lies outside the image frame")
    st = disk(dilation)
    dilated = [ndimage.binary_dilation(np.asarray(m, dtype=bool), structure=st) for m in truth_masks]
    touched = [set() for _ in predicted]
    for j, d in enumerate(predicted):
        r, c = np.asarray(d.pixels).T
        for k, dm in enumerate(dilated):
            if dm[r, c].any():
                touched[j].add(k)
    records = []
    for k, size in enumerate(truth_sizes):
        sizes = [predicted[j].size_mm for j in range(len(predicted)) if k in touched[j]]
        hit = bool(sizes)
        records.append(HitMissRecord(float(size), hit, max(sizes) if hit else None, image_id, fold_id))
    false_calls = []
    for j, d in enumerate(predicted):
        if not touched[j]:
            r, c = np.asarray(d.pixels).T
            false_calls.append(FalseCall(j, float(d.size_mm), bool(weld[r, c].any()), image_id))
    return records, false_calls

"""Whole-image inference by overlapping tiles at model scale.

Pipeline for one radiograph:

1. mirror-pad the source by ``overlap`` pixels (plus one reflected row/column
   when a padded extent is odd, so the 2x downsampling is defined);
2. build the [raw, unsharp] stack and downsample it to model scale;
3. cut the stack into model-sized tiles that overlap by ``overlap`` pixels;
4. run the network on each tile, binarise at ``threshold``;
5. replicate each tile mask 2x2 back to source scale and OR it into the
   global mask;
6. crop the padding away.

With ``merge="mean"`` the tile probabilities are averaged before a single
threshold instead of the per-tile binarise-then-OR.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .imagecore import BinaryMask, GrayImage, downsample2_array, mirror_pad_array, unsharp_array
from .nnet.unet import UNetModel


@dataclass(frozen=True)
class TileGrid:
    tile: int
    overlap: int
    ys: tuple[int, ...]
    xs: tuple[int, ...]
    width: int
    height: int
    margin: int = 0

    @property
    def origins(self) -> list[tuple[int, int]]:
        """(row, col) origins, row-major."""
        return [(y, x) for y in self.ys for x in self.xs]

    def __len__(self) -> int:
        return len(self.ys) * len(self.xs)

    def coverage(self) -> np.ndarray:
        """Number of tiles covering each pixel."""
        c = np.zeros((self.height, self.width), dtype=np.int32)
        for y, x in self.origins:
            c[y:y + self.tile, x:x + self.tile] += 1
        return c


def _axis_origins(length: int, tile: int, stride: int) -> tuple[int, ...]:
    if length <= tile:
        return (0,)
    out = list(range(0, length - tile, stride))
    out.append(length - tile)
    return tuple(sorted(set(out)))


def plan_tiles(width: int, height: int, tile: int = 256, overlap: int = 32,
               margin: int = 0) -> TileGrid:
    """Origins stepping by ``tile - overlap``; the last tile on each axis is clamped to the edge."""
    if tile < 1 or overlap < 0:
        raise ValueError("tile must be >= 1 and overlap >= 0")
    if overlap >= tile:
        raise ValueError(f"overlap {overlap} must be smaller than tile {tile}")
    stride = tile - overlap
    return TileGrid(tile, overlap, _axis_origins(height, tile, stride),
                    _axis_origins(width, tile, stride), width, height, margin)


@dataclass(frozen=True)
class InferConfig:
    overlap: int = 32  # model-scale pixels
    threshold: float = 0.5
    unsharp_sigma: float = 2.0
    unsharp_amount: float = 1.0
    merge: str = "or"  # "or" | "mean"

    def __post_init__(self):
        if self.merge not in ("or", "mean"):
            raise ValueError(f"unknown merge mode {self.merge!r}")
        if self.overlap < 0:
            raise ValueError("overlap must be >= 0")


def _fill_to(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Symmetric-extend the trailing two axes of ``a`` to at least ``h`` x ``w``."""
    while a.shape[-2] < h or a.shape[-1] < w:
        ph = min(max(h - a.shape[-2], 0), a.shape[-2])
        pw = min(max(w - a.shape[-1], 0), a.shape[-1])
        pad = [(0, 0)] * (a.ndim - 2) + [(0, ph), (0, pw)]
        a = np.pad(a, pad, mode="symmetric")
    return a


def prepare_stack(pixels: np.ndarray, tile: int, cfg: InferConfig) -> tuple[np.ndarray, int]:
    """Padded model-scale stack ``(2, H', W')`` and the source-scale margin used."""
    margin = cfg.overlap
    if margin >= min(pixels.shape):
        margin = min(pixels.shape) - 1
    padded = mirror_pad_array(pixels, margin)
    h, w = padded.shape
    padded = _fill_to(padded, h + h % 2, w + w % 2)
    stack = np.stack([padded, unsharp_array(padded, cfg.unsharp_sigma, cfg.unsharp_amount)])
    small = downsample2_array(stack)
    small = _fill_to(small, tile, tile)
    return small, margin


def tile_outputs(model: UNetModel, stack: np.ndarray, grid: TileGrid):
    """Yield ``(row, col, probability)`` for each tile, one forward pass per tile."""
    dtype = next(iter(model.params.values())).dtype
    t = grid.tile
    for y, x in grid.origins:
        xb = stack[None, :, y:y + t, x:x + t].astype(dtype)
        yield y, x, model.forward(xb, record=False)[0, 0]


def predict_image(model: UNetModel, img: GrayImage, cfg: InferConfig | None = None,
                  threshold: float | None = None) -> BinaryMask:
    """Full-resolution prediction mask for ``img``."""
    cfg = cfg or InferConfig()
    thr = cfg.threshold if threshold is None else threshold
    tile = model.config.input_size
    if cfg.overlap >= tile:
        raise ValueError(f"overlap {cfg.overlap} must be smaller than tile {tile}")
    stack, margin = prepare_stack(np.asarray(img.pixels), tile, cfg)
    sh, sw = stack.shape[1:]
    grid = plan_tiles(sw, sh, tile, cfg.overlap, margin)
    if cfg.merge == "or":
        small = np.zeros((sh, sw), dtype=bool)
        for y, x, p in tile_outputs(model, stack, grid):
            small[y:y + tile, x:x + tile] |= p >= thr
    else:
        acc = np.zeros((sh, sw))
        cnt = np.zeros((sh, sw))
        for y, x, p in tile_outputs(model, stack, grid):
            acc[y:y + tile, x:x + tile] += p
            cnt[y:y + tile, x:x + tile] += 1
        small = acc / cnt >= thr
    full = small.repeat(2, axis=0).repeat(2, axis=1)
    h, w = img.shape
    bits = full[margin:margin + h, margin:margin + w]
    return BinaryMask(bits, "prediction", img.pixel_pitch)


@dataclass(frozen=True)
class BenchmarkResult:
    median_ms_per_tile: float
    tiles_per_s: float
    n_tiles: int
    samples_ms: tuple[float, ...]  # per-tile ms for each repetition

    @property
    def median_total_ms(self) -> float:
        return self.median_ms_per_tile * self.n_tiles


def benchmark(model: UNetModel, img: GrayImage, repetitions: int = 5,
              cfg: InferConfig | None = None) -> BenchmarkResult:
    """Median per-tile forward time over ``repetitions`` passes; one warm-up tile is excluded."""
    if repetitions < 3:
        raise ValueError("benchmark needs at least 3 repetitions")
    cfg = cfg or InferConfig()
    tile = model.config.input_size
    stack, margin = prepare_stack(np.asarray(img.pixels), tile, cfg)
    grid = plan_tiles(stack.shape[2], stack.shape[1], tile, cfg.overlap, margin)
    next(tile_outputs(model, stack, grid))  # warm-up
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for _ in tile_outputs(model, stack, grid):
            pass
        samples.append((time.perf_counter() - t0) * 1e3 / len(grid))
    med = float(np.median(samples))
    return BenchmarkResult(med, 1e3 / med, len(grid), tuple(samples))

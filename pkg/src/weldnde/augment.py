"""Training-set construction: patch sampling, standard augmentation and
virtual-flaw extraction/re-embedding.

Three strategies are supported by :func:`build_training_set`:

``standard``
    random patches from the training images, each passed through
    :func:`standard_augment`.
``pure_virtual``
    defect-free patches into which transformed flaws from the training
    images' :class:`FlawBank` are embedded.
``combined``
    half of the patches from each of the above, by count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, signal

from .geometry import feret, label_components, mask_points
from .imagecore import AffineTransform, BinaryMask, GrayImage, warp_array
from .seeding import mix_seed, stable_tag

PROVENANCE = ("real", "standard_aug", "virtual_aug")
STRATEGIES = ("standard", "pure_virtual", "combined")
TABLE1_FRACTIONS = (1.0, 0.75, 0.5, 0.25, 0.10, 0.05, 0.015)
SNIPPET_MARGIN = 8


class PlacementError(RuntimeError):
    """No position in the patch can host the flaw."""


@dataclass(eq=False)
class Patch:
    image: GrayImage
    mask: BinaryMask
    weld: BinaryMask
    provenance: str = "real"
    origin: tuple[int, int] = (0, 0)  # (top, left) in the source image
    source_id: str = ""
    transform: AffineTransform | None = None  # geometric transform applied by augmentation
    flaw_sources: tuple[str, ...] = ()  # image ids of embedded virtual flaws

    def __post_init__(self):
        if not (self.image.shape == self.mask.shape == self.weld.shape):
            raise ValueError("patch rasters must share dimensions")
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class AugmentConfig:
    """Enabled transforms and their sampling ranges; ``None`` disables a transform.

    Each enabled transform is applied independently with ``probability``.
    """

    hflip: bool = True
    vflip: bool = True
    rotation_deg: tuple[float, float] | None = (-15.0, 15.0)
    shear: tuple[float, float] | None = (-0.1, 0.1)
    crop_scale: tuple[float, float] | None = (1.0, 1.25)
    brightness: tuple[float, float] | None = (-0.05, 0.05)
    contrast: tuple[float, float] | None = (0.85, 1.15)
    noise_sigma: tuple[float, float] | None = (0.0, 0.01)
    probability: float = 0.5
    weld_fraction: float = 0.7  # minimum share of sampled patches touching the weld
    seed: int = 0

    def __post_init__(self):
        for name in ("rotation_deg", "shear", "crop_scale", "brightness", "contrast", "noise_sigma"):
            r = getattr(self, name)
            if r is not None and not r[0] <= r[1]:
                raise ValueError(f"{name} range {r} is empty")
        if self.noise_sigma is not None and self.noise_sigma[0] < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.crop_scale is not None and self.crop_scale[0] <= 0:
            raise ValueError("crop scale must be positive")
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must lie in [0, 1]")

    @classmethod
    def disabled(cls, **kw) -> "AugmentConfig":
        base = dict(hflip=False, vflip=False, rotation_deg=None, shear=None, crop_scale=None,
                    brightness=None, contrast=None, noise_sigma=None)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True, eq=False)
class FlawInstance:
    snippet: GrayImage
    snippet_mask: BinaryMask
    background_level: float
    size_mm: float
    source_id: str = ""
    fold_id: str = ""

    def __post_init__(self):
        if not self.snippet_mask.bits.any():
            raise ValueError("flaw snippet mask is empty")
        if not 0 < self.background_level < 1:
            raise ValueError("background level must lie in (0, 1)")


@dataclass
class FlawBank:
    instances: list[FlawInstance]
    fold_id: str = ""
    source_ids: frozenset = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class FlawTransformRanges:
    flip: bool = True
    rotation_deg: tuple[float, float] = (0.0, 360.0)
    shear: tuple[float, float] = (-0.15, 0.15)
    scale: tuple[float, float] = (0.8, 1.25)
    noise_sigma: float = 0.004


# ---------------------------------------------------------------------------
# patch sampling


def sample_patches(img: GrayImage, gt: BinaryMask, weld: BinaryMask, n: int,
                   rng: np.random.Generator, size: int = 512, weld_fraction: float = 0.7,
                   avoid_defects: bool = False, source_id: str = "") -> list[Patch]:
    """``n`` random ``size`` x ``size`` crops with consistent masks.

    At least ``ceil(weld_fraction * n)`` crops intersect the weld (rejection
    sampling).  With ``avoid_defects`` crops touching ground truth are
    rejected while an alternative can be found.
    """
    h, w = img.shape
    if h < size or w < size:
        raise ValueError(f"image {w}x{h} smaller than patch size {size}")
    if n <= 0:
        return []
    weld_sat = np.pad(weld.bits.astype(np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    gt_sat = np.pad(gt.bits.astype(np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))

    def box_sum(sat, top, left):
        return (sat[top + size, left + size] - sat[top, left + size]
                - sat[top + size, left] + sat[top, left])

    max_off_weld = n - math.ceil(weld_fraction * n)
    off_weld = 0
    corners = []
    for _ in range(n):
        for attempt in range(1000):
            top = int(rng.integers(0, h - size + 1))
            left = int(rng.integers(0, w - size + 1))
            touches = box_sum(weld_sat, top, left) > 0
            if not touches and off_weld >= max_off_weld and attempt < 999:
                continue
            if avoid_defects and box_sum(gt_sat, top, left) > 0 and attempt < 999:
                continue
            break
        off_weld += not touches
        corners.append((top, left))
    out = []
    for top, left in corners:
        sl = (slice(top, top + size), slice(left, left + size))
        out.append(Patch(GrayImage(img.pixels[sl], img.pixel_pitch),
                         gt.with_bits(gt.bits[sl]), weld.with_bits(weld.bits[sl]),
                         "real", (top, left), source_id))
    return out


# ---------------------------------------------------------------------------
# standard augmentation


def _draw_geometry(cfg: AugmentConfig, rng: np.random.Generator, size: int) -> AffineTransform:
    c = (size - 1) / 2.0
    t = AffineTransform.identity()
    p = cfg.probability
    if cfg.hflip and rng.random() < p:
        t = t.then(AffineTransform(np.array([[-1.0, 0, size - 1], [0, 1.0, 0]])))
    if cfg.vflip and rng.random() < p:
        t = t.then(AffineTransform(np.array([[1.0, 0, 0], [0, -1.0, size - 1]])))
    if cfg.rotation_deg is not None and rng.random() < p:
        t = t.then(AffineTransform.rotation(rng.uniform(*cfg.rotation_deg), c, c))
    if cfg.shear is not None and rng.random() < p:
        t = t.then(AffineTransform.about([[1.0, rng.uniform(*cfg.shear)], [0.0, 1.0]], c, c))
    if cfg.crop_scale is not None and rng.random() < p:
        s = rng.uniform(*cfg.crop_scale)
        # zoom about a random centre such that the kept window stays inside the patch
        half = size / (2.0 * s)
        lo, hi = half - 0.5, size - half - 0.5
        cx = rng.uniform(lo, hi) if hi > lo else c
        cy = rng.uniform(lo, hi) if hi > lo else c
        t = t.then(AffineTransform(np.array([[s, 0, c - s * cx], [0, s, c - s * cy]])))
    return t


def standard_augment(p: Patch, cfg: AugmentConfig, rng: np.random.Generator) -> Patch:
    """Random geometric, photometric and noise transforms, in that order.

    The composed geometry is recorded in ``transform`` and applied identically
    to the image (bilinear) and both masks (nearest neighbour).
    """
    size = p.image.height
    t = _draw_geometry(cfg, rng, size)
    img = warp_array(p.image.pixels, t, order=1)
    mask = warp_array(p.mask.bits, t, order=0)
    weld = warp_array(p.weld.bits, t, order=0)
    prob = cfg.probability
    if cfg.brightness is not None and rng.random() < prob:
        img = img + rng.uniform(*cfg.brightness)
    if cfg.contrast is not None and rng.random() < prob:
        m = img.mean()
        img = (img - m) * rng.uniform(*cfg.contrast) + m
    if cfg.noise_sigma is not None and rng.random() < prob:
        img = img + rng.normal(0.0, rng.uniform(*cfg.noise_sigma), img.shape)
    return replace(p, image=p.image.with_pixels(img), mask=p.mask.with_bits(mask),
                   weld=p.weld.with_bits(weld), provenance="standard_aug", transform=t)


# ---------------------------------------------------------------------------
# virtual flaws


def extract_flaws(dataset, fold, fold_id: str = "") -> FlawBank:
    """One :class:`FlawInstance` per ground-truth component of the fold's images.

    ``fold`` is a sequence of dataset indices (the training images).
    """
    fold = list(fold)
    if not fold:
        raise ValueError("empty training fold")
    instances = []
    for idx in fold:
        s = dataset[idx]
        gt = s.ground_truth.bits
        labels, n = label_components(gt)
        h, w = gt.shape
        for k, sl in enumerate(ndimage.find_objects(labels), start=1):
            y0 = max(sl[0].start - SNIPPET_MARGIN, 0)
            y1 = min(sl[0].stop + SNIPPET_MARGIN, h)
            x0 = max(sl[1].start - SNIPPET_MARGIN, 0)
            x1 = min(sl[1].stop + SNIPPET_MARGIN, w)
            snip = s.image.pixels[y0:y1, x0:x1]
            comp = labels[y0:y1, x0:x1] == k
            bg = snip[~gt[y0:y1, x0:x1]]
            level = float(np.median(bg)) if bg.size else float(np.median(snip))
            level = min(max(level, 1e-3), 1 - 1e-3)
            pitch = s.image.pixel_pitch
            instances.append(FlawInstance(
                GrayImage(snip, pitch), BinaryMask(comp, "ground_truth", pitch), level,
                feret(mask_points(comp))[0] * pitch, s.image_id, fold_id))
    return FlawBank(instances, fold_id, frozenset(dataset[i].image_id for i in fold))


def warp_flaw(f: FlawInstance, linear: np.ndarray, noise_sigma: float = 0.0,
              rng: np.random.Generator | None = None) -> FlawInstance:
    """Apply a linear map (about the snippet centre) to snippet and mask jointly."""
    linear = np.asarray(linear, dtype=np.float64)
    if np.array_equal(linear, np.eye(2)) and noise_sigma == 0:
        return replace(f, size_mm=feret(mask_points(f.snippet_mask.bits))[0] * f.snippet.pixel_pitch)
    snip = f.snippet.pixels
    mask = f.snippet_mask.bits
    h, w = snip.shape
    # canvas large enough for the transformed footprint
    corners = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [-w / 2, h / 2], [w / 2, h / 2]])
    ext = np.abs(corners @ linear.T).max(axis=0)
    cw, ch = int(math.ceil(2 * ext[0])) + 2, int(math.ceil(2 * ext[1])) + 2
    py, px = max((ch - h + 1) // 2, 0), max((cw - w + 1) // 2, 0)
    canvas = np.pad(snip, ((py, py), (px, px)), mode="symmetric")
    cmask = np.pad(mask, ((py, py), (px, px)))
    cy, cx = (canvas.shape[0] - 1) / 2.0, (canvas.shape[1] - 1) / 2.0
    t = AffineTransform.about(linear, cx, cy)
    new_img = warp_array(canvas, t, order=1)
    new_mask = warp_array(cmask, t, order=0, fill=False)
    if not new_mask.any():
        raise ValueError("transformed flaw mask is empty")
    ys, xs = np.nonzero(new_mask)
    y0 = max(ys.min() - SNIPPET_MARGIN, 0)
    y1 = min(ys.max() + 1 + SNIPPET_MARGIN, new_mask.shape[0])
    x0 = max(xs.min() - SNIPPET_MARGIN, 0)
    x1 = min(xs.max() + 1 + SNIPPET_MARGIN, new_mask.shape[1])
    new_img = new_img[y0:y1, x0:x1]
    new_mask = new_mask[y0:y1, x0:x1]
    if noise_sigma > 0:
        new_img = new_img + (rng or np.random.default_rng()).normal(0.0, noise_sigma, new_img.shape)
    pitch = f.snippet.pixel_pitch
    return replace(f, snippet=GrayImage(np.clip(new_img, 0, 1), pitch),
                   snippet_mask=BinaryMask(new_mask, "ground_truth", pitch),
                   size_mm=feret(mask_points(new_mask))[0] * pitch)


def transform_flaw(f: FlawInstance, rng: np.random.Generator,
                   ranges: FlawTransformRanges | None = None) -> FlawInstance:
    """Random flip, rotation, shear and scale of a flaw snippet plus light noise."""
    r = ranges or FlawTransformRanges()
    for _ in range(8):
        lin = np.eye(2)
        if r.flip and rng.random() < 0.5:
            lin = np.diag([-1.0, 1.0]) @ lin
        theta = math.radians(rng.uniform(*r.rotation_deg))
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        shear = np.array([[1.0, rng.uniform(*r.shear)], [0.0, 1.0]])
        scale = rng.uniform(*r.scale)
        lin = scale * rot @ shear @ lin
        try:
            return warp_flaw(f, lin, r.noise_sigma, rng)
        except ValueError:
            continue
    raise ValueError("flaw transform degenerated the mask 8 times in a row")


def valid_sites(p: Patch, fmask: np.ndarray) -> np.ndarray:
    """Top-left offsets where ``fmask`` lies inside the weld and off existing flaws."""
    h, w = fmask.shape
    if p.image.height < h or p.image.width < w:
        return np.zeros((0, 2), dtype=int)
    bad = (~p.weld.bits | p.mask.bits).astype(np.float64)
    hits = signal.correlate(bad, fmask.astype(np.float64), mode="valid", method="fft")
    return np.argwhere(hits < 0.5)


def embed_flaw(p: Patch, f: FlawInstance, rng: np.random.Generator) -> Patch:
    """Multiplicatively blend ``f`` into ``p`` at a uniformly chosen valid site."""
    if not p.weld.bits.any():
        raise PlacementError("patch has no weld pixels")
    fmask = f.snippet_mask.bits
    sites = valid_sites(p, fmask)
    if len(sites) == 0:
        raise PlacementError("no valid placement inside the weld")
    top, left = sites[int(rng.integers(len(sites)))]
    h, w = fmask.shape
    img = p.image.pixels.copy()
    region = img[top:top + h, left:left + w]
    ratio = f.snippet.pixels / f.background_level
    region[fmask] = region[fmask] * ratio[fmask]
    mask = p.mask.bits.copy()
    mask[top:top + h, left:left + w] |= fmask
    return replace(p, image=p.image.with_pixels(img), mask=p.mask.with_bits(mask),
                   provenance="virtual_aug", flaw_sources=p.flaw_sources + (f.source_id,))


# ---------------------------------------------------------------------------
# training sets


def subset_indices(indices, fraction: float, seed: int) -> list[int]:
    """First ``ceil(fraction * N)`` of a seeded shuffle (nested across fractions)."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction {fraction} outside (0, 1]")
    indices = list(indices)
    order = np.random.default_rng(mix_seed(seed, 17)).permutation(len(indices))
    k = max(1, math.ceil(fraction * len(indices) - 1e-9))
    return [indices[i] for i in order[:k]]


@dataclass(frozen=True)
class TrainingSetConfig:
    patch_size: int = 512
    patches_per_image: int = 8
    flaws_per_patch: tuple[int, int] = (1, 3)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    flaw_ranges: FlawTransformRanges = field(default_factory=FlawTransformRanges)


def _virtual_patch(s, bank: FlawBank, cfg: TrainingSetConfig, rng) -> Patch:
    base = sample_patches(s.image, s.ground_truth, s.weld, 1, rng, cfg.patch_size,
                          weld_fraction=1.0, avoid_defects=True, source_id=s.image_id)[0]
    p = replace(base, provenance="virtual_aug")
    lo, hi = cfg.flaws_per_patch
    for _ in range(int(rng.integers(lo, hi + 1))):
        f = bank.instances[int(rng.integers(len(bank)))]
        try:
            p = embed_flaw(p, transform_flaw(f, rng, cfg.flaw_ranges), rng)
        except (PlacementError, ValueError):
            continue
    return p


def build_training_set(dataset, train_indices, strategy: str, fraction: float = 1.0,
                       cfg: TrainingSetConfig | None = None, seed: int = 0,
                       bank: FlawBank | None = None, fold_id: str = "") -> list[Patch]:
    """Patches for one training run.

    The training images are first reduced to the seeded ``fraction`` subset;
    flaws for virtual augmentation come only from that subset (or from a
    caller-supplied ``bank`` that must belong to the same fold).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = cfg or TrainingSetConfig()
    subset = subset_indices(train_indices, fraction, seed)
    allowed = frozenset(dataset[i].image_id for i in train_indices)
    if strategy != "standard":
        if bank is None:
            bank = extract_flaws(dataset, subset, fold_id)
        if bank.fold_id != fold_id or not bank.source_ids <= allowed:
            raise ValueError("flaw bank does not belong to this training fold")
        if len(bank) == 0:
            raise ValueError(f"strategy {strategy!r} needs a non-empty flaw bank")
    n_total = cfg.patches_per_image * len(subset)
    out = []
    g = 0
    for pos, idx in enumerate(subset):
        s = dataset[idx]
        for j in range(cfg.patches_per_image):
            rng = np.random.default_rng(mix_seed(mix_seed(seed, stable_tag(strategy)), g))
            virtual = strategy == "pure_virtual" or (strategy == "combined" and g % 2 == 1)
            if virtual:
                out.append(_virtual_patch(s, bank, cfg, rng))
            else:
                p = sample_patches(s.image, s.ground_truth, s.weld, 1, rng, cfg.patch_size,
                                   cfg.augment.weld_fraction, source_id=s.image_id)[0]
                out.append(standard_augment(p, cfg.augment, rng))
            g += 1
    assert len(out) == n_total
    return out

"""Synthetic weld radiographs with parameterised cracks and pores.

Scenes are a smooth background with a brighter, slightly curved weld band.
Each defect multiplies the clean image by ``1 - a(x, y)`` where ``a`` is an
attenuation bump of peak ``contrast``.  The bump has a super-Gaussian
profile ``contrast * exp(-ln2 * (r / R)**4)``, so the half-peak contour (the
ground-truth boundary) sits exactly at ``r = R``: the pore radius, or the
crack half-width around its centre polyline.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import BinaryMask, GrayImage, load_mask, load_pgm16, save_mask, save_pgm16
from .imagecore import read_pgm, write_pgm
from .seeding import mix_seed

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DefectSpec:
    kind: str  # "crack" | "pore"
    size_mm: float  # crack length or pore diameter
    position_mm: tuple[float, float]  # (x, y) of the defect centre
    orientation_deg: float = 0.0
    contrast: float = 0.25
    width_mm: float = 0.2  # crack width (ignored for pores)

    def __post_init__(self):
        if self.kind not in ("crack", "pore"):
            raise ValueError(f"unknown defect kind {self.kind!r}")
        if not self.size_mm > 0:
            raise ValueError("defect size must be positive")
        if not 0 < self.contrast <= 0.5:
            raise ValueError("contrast must lie in (0, 0.5]")
        if self.kind == "crack" and not self.width_mm > 0:
            raise ValueError("crack width must be positive")

    def to_record(self) -> dict:
        return {"kind": self.kind, "size_mm": self.size_mm,
                "position_mm": list(self.position_mm),
                "orientation_deg": self.orientation_deg, "contrast": self.contrast,
                "width_mm": self.width_mm}


@dataclass(frozen=True)
class SceneSpec:
    width: int = 256
    height: int = 256
    pixel_pitch: float = 0.1
    weld_center_mm: float | None = None  # band centre line y at the image centre
    weld_width_mm: float = 8.0
    weld_sag_px: float = 4.0  # vertical offset of the band centre at the left/right edges
    weld_boost: float = 0.2
    base_intensity: float = 0.45
    gradient: tuple[float, float] = (0.05, 0.02)  # intensity change across x, y
    noise_sigma: float = 0.01
    defects: tuple[DefectSpec, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        half = self.weld_width_mm / self.pixel_pitch / 2
        cy = self.center_px
        if cy - half - abs(self.weld_sag_px) < 0 or cy + half + abs(self.weld_sag_px) > self.height - 1:
            raise ValueError("weld band does not fit inside the image")

    @property
    def center_px(self) -> float:
        if self.weld_center_mm is None:
            return (self.height - 1) / 2.0
        return self.weld_center_mm / self.pixel_pitch

    def band_center(self, x: np.ndarray) -> np.ndarray:
        u = 2.0 * (x - (self.width - 1) / 2.0) / max(self.width - 1, 1)
        return self.center_px + self.weld_sag_px * u * u


@dataclass
class Sample:
    """One radiograph with its masks and per-flaw truth."""

    image: GrayImage
    ground_truth: BinaryMask
    weld: BinaryMask
    defects: list[DefectSpec]
    labels: np.ndarray  # 0 background, k = defects[k - 1]
    image_id: str = ""

    def flaw_mask(self, k: int) -> np.ndarray:
        return self.labels == (k + 1)


Dataset = list  # list[Sample]


# ---------------------------------------------------------------------------
# rendering


def _weld_geometry(spec: SceneSpec):
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    dist = np.abs(ys - spec.band_center(xs))
    half = spec.weld_width_mm / spec.pixel_pitch / 2.0
    return xs, ys, dist, half


def _clean_image(spec: SceneSpec):
    xs, ys, dist, half = _weld_geometry(spec)
    gx, gy = spec.gradient
    bg = (spec.base_intensity + gx * (xs / max(spec.width - 1, 1) - 0.5)
          + gy * (ys / max(spec.height - 1, 1) - 0.5))
    shoulder = max(0.15 * half, 1.0)
    s = np.clip((half + shoulder - dist) / (2.0 * shoulder), 0.0, 1.0)
    plateau = s * s * (3.0 - 2.0 * s)
    return bg + spec.weld_boost * plateau, dist <= half


def _crack_polyline(d: DefectSpec, pitch: float, rng: np.random.Generator) -> np.ndarray:
    """Three-segment centre line (pixel coords) whose mask spans ~``size_mm``."""
    length = d.size_mm / pitch
    half_w = d.width_mm / pitch / 2.0
    core = max(length - 2.0 * half_w, 0.0)
    theta = math.radians(d.orientation_deg)
    kinks = rng.uniform(-10.0, 10.0, size=3)
    cx, cy = d.position_mm[0] / pitch, d.position_mm[1] / pitch
    pts = [np.zeros(2)]
    for k in kinks:
        a = theta + math.radians(k)
        pts.append(pts[-1] + core / 3.0 * np.array([math.cos(a), math.sin(a)]))
    pts = np.array(pts)
    # centre the chord midpoint on the defect position
    mid = (pts[0] + pts[-1]) / 2.0
    return pts - mid + np.array([cx, cy])


def _segment_distance(px, py, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def defect_attenuation(d: DefectSpec, shape: tuple[int, int], pitch: float,
                       rng: np.random.Generator):
    """Attenuation window for one defect: (slice_y, slice_x, att, mask)."""
    h, w = shape
    if d.kind == "pore":
        radius = d.size_mm / pitch / 2.0
        cx, cy = d.position_mm[0] / pitch, d.position_mm[1] / pitch
        reach = 1.6 * radius + 2
        pts = None
    else:
        radius = d.width_mm / pitch / 2.0
        pts = _crack_polyline(d, pitch, rng)
        cx, cy = pts[:, 0].mean(), pts[:, 1].mean()
        reach = np.max(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)) + 1.6 * radius + 2
    y0, y1 = max(int(cy - reach), 0), min(int(cy + reach) + 2, h)
    x0, x1 = max(int(cx - reach), 0), min(int(cx + reach) + 2, w)
    if y0 >= y1 or x0 >= x1:
        raise ValueError("defect lies outside the image")
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    if pts is None:
        r = np.hypot(xs - cx, ys - cy)
    else:
        r = np.min([_segment_distance(xs, ys, pts[i], pts[i + 1]) for i in range(len(pts) - 1)],
                   axis=0)
    att = d.contrast * np.exp(-LN2 * (r / radius) ** 4)
    return slice(y0, y1), slice(x0, x1), att, att > 0.5 * d.contrast


def _render(spec: SceneSpec):
    clean, weld = _clean_image(spec)
    shape = (spec.height, spec.width)
    transmit = np.ones(shape)
    labels = np.zeros(shape, dtype=np.int32)
    for k, d in enumerate(spec.defects):
        rng = np.random.default_rng(mix_seed(spec.rng_seed, 1000 + k))
        sy, sx, att, mask = defect_attenuation(d, shape, spec.pixel_pitch, rng)
        if not np.all(weld[sy, sx][mask]):
            raise ValueError(f"defect {k} ({d.kind} at {d.position_mm} mm) leaves the weld band")
        transmit[sy, sx] *= 1.0 - att
        labels[sy, sx][mask] = k + 1
    img = clean * transmit
    if spec.noise_sigma > 0:
        img = img + np.random.default_rng(mix_seed(spec.rng_seed, 0)).normal(
            0.0, spec.noise_sigma, shape)
    return np.clip(img, 0.0, 1.0), labels, weld


def render_scene(spec: SceneSpec) -> tuple[GrayImage, BinaryMask, BinaryMask]:
    """Render (image, ground-truth mask, weld mask); deterministic in ``spec``."""
    img, labels, weld = _render(spec)
    p = spec.pixel_pitch
    return (GrayImage(img, p), BinaryMask(labels > 0, "ground_truth", p),
            BinaryMask(weld, "weld_region", p))


def render_sample(spec: SceneSpec, image_id: str = "") -> Sample:
    img, labels, weld = _render(spec)
    p = spec.pixel_pitch
    return Sample(GrayImage(img, p), BinaryMask(labels > 0, "ground_truth", p),
                  BinaryMask(weld, "weld_region", p), list(spec.defects), labels, image_id)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class SynthConfig:
    image_size: tuple[int, int] = (256, 256)  # (width, height)
    pixel_pitch: float = 0.1
    flaws_per_image: float = 3.0  # Poisson mean
    size_range_mm: tuple[float, float] = (0.5, 4.0)
    crack_fraction: float = 0.4
    contrast_range: tuple[float, float] = (0.15, 0.35)
    crack_width_mm: tuple[float, float] = (0.2, 0.3)
    weld_width_mm: tuple[float, float] = (8.0, 11.0)
    noise_sigma: tuple[float, float] = (0.008, 0.015)
    defect_free_fraction: float = 0.0  # share of images forced to carry no defects

    def __post_init__(self):
        lo, hi = self.size_range_mm
        if not (0 < lo < hi):
            raise ValueError(f"empty flaw size range {self.size_range_mm}")
        if self.flaws_per_image < 0:
            raise ValueError("flaws_per_image must be >= 0")


def sample_sizes(rng: np.random.Generator, n: int, size_range_mm) -> np.ndarray:
    """Log-uniform flaw sizes over ``[lo, hi]`` mm."""
    lo, hi = size_range_mm
    if not (0 < lo < hi):
        raise ValueError(f"empty flaw size range {size_range_mm}")
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))


def _place_defects(base: SceneSpec, cfg: SynthConfig, rng: np.random.Generator,
                   n_flaws: int) -> list[DefectSpec]:
    _, weld = _clean_image(base)
    occupied = np.zeros(weld.shape, dtype=bool)
    shape = weld.shape
    pitch = base.pixel_pitch
    placed: list[DefectSpec] = []
    sizes = sample_sizes(rng, n_flaws, cfg.size_range_mm)
    half = base.weld_width_mm / pitch / 2.0
    for size in sizes:
        kind = "crack" if rng.random() < cfg.crack_fraction else "pore"
        contrast = float(rng.uniform(*cfg.contrast_range))
        width = float(rng.uniform(*cfg.crack_width_mm))
        margin = int(math.ceil(size / pitch / 2.0)) + 3
        if 2 * margin >= base.width:
            continue
        for _ in range(200):
            x = int(rng.integers(margin, base.width - margin))
            yc = float(base.band_center(np.array([float(x)]))[0])
            y = int(round(yc + rng.uniform(-half, half)))
            orient = float(rng.uniform(0.0, 180.0)) if kind == "crack" else 0.0
            d = DefectSpec(kind, float(size), (x * pitch, y * pitch), orient, contrast, width)
            try:
                sy, sx, _, mask = defect_attenuation(
                    d, shape, pitch, np.random.default_rng(mix_seed(base.rng_seed, 1000 + len(placed))))
            except ValueError:
                continue
            if mask.sum() == 0 or not np.all(weld[sy, sx][mask]) or np.any(occupied[sy, sx][mask]):
                continue
            full = np.zeros(shape, dtype=bool)
            full[sy, sx] = mask
            occupied |= _dilate(full, 4)
            placed.append(d)
            break
    return placed


def _dilate(mask: np.ndarray, r: int) -> np.ndarray:
    from scipy import ndimage
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return ndimage.binary_dilation(mask, structure=(xx * xx + yy * yy) <= r * r)


def scene_for(cfg: SynthConfig, seed: int, index: int, with_defects: bool = True) -> SceneSpec:
    child = mix_seed(seed, index)
    rng = np.random.default_rng(child)
    w, h = cfg.image_size
    base = SceneSpec(
        width=w, height=h, pixel_pitch=cfg.pixel_pitch,
        weld_center_mm=None,
        weld_width_mm=float(rng.uniform(*cfg.weld_width_mm)),
        weld_sag_px=float(rng.uniform(-0.04, 0.04) * h),
        weld_boost=float(rng.uniform(0.15, 0.25)),
        base_intensity=float(rng.uniform(0.35, 0.5)),
        gradient=(float(rng.uniform(-0.08, 0.08)), float(rng.uniform(-0.05, 0.05))),
        noise_sigma=float(rng.uniform(*cfg.noise_sigma)),
        rng_seed=child,
    )
    n = int(rng.poisson(cfg.flaws_per_image)) if with_defects else 0
    if with_defects and rng.random() < cfg.defect_free_fraction:
        n = 0
    defects = _place_defects(base, cfg, rng, n) if n else []
    return SceneSpec(**{**base.__dict__, "defects": tuple(defects)})


def generate_dataset(n_images: int, cfg: SynthConfig | None = None, seed: int = 0) -> Dataset:
    """``n_images`` independent scenes; scene ``i`` uses seed ``mix_seed(seed, i)``."""
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    cfg = cfg or SynthConfig()
    return [render_sample(scene_for(cfg, seed, i), image_id=f"img_{i:04d}")
            for i in range(n_images)]


# ---------------------------------------------------------------------------
# manifest I/O


def flaw_records(sample: Sample) -> list[dict]:
    pitch = sample.image.pixel_pitch
    out = []
    for k, d in enumerate(sample.defects):
        ys, xs = np.nonzero(sample.flaw_mask(k))
        out.append({"kind": d.kind, "size_mm": d.size_mm,
                    "centroid": [float(xs.mean() * pitch), float(ys.mean() * pitch)],
                    "spec": d.to_record()})
    return out


def write_dataset(dataset: Dataset, outdir: str | Path) -> Path:
    """Write images, masks, label rasters and ``manifest.json``; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset:
        stem = s.image_id
        save_pgm16(s.image, outdir / f"{stem}.pgm")
        save_mask(s.ground_truth, outdir / f"{stem}_gt.pgm")
        save_mask(s.weld, outdir / f"{stem}_weld.pgm")
        write_pgm(outdir / f"{stem}_labels.pgm", s.labels, 65535)
        entries.append({"id": stem, "image": f"{stem}.pgm", "ground_truth": f"{stem}_gt.pgm",
                        "weld": f"{stem}_weld.pgm", "labels": f"{stem}_labels.pgm",
                        "pixel_pitch_mm": s.image.pixel_pitch, "flaws": flaw_records(s)})
    path = outdir / "manifest.json"
    path.write_text(json.dumps({"version": 1, "images": entries}, indent=1, sort_keys=True))
    return path


def read_dataset(manifest: str | Path) -> Dataset:
    manifest = Path(manifest)
    if not manifest.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest}")
    root = manifest.parent
    data = json.loads(manifest.read_text())
    out = []
    for e in data["images"]:
        pitch = e["pixel_pitch_mm"]
        labels, _ = read_pgm(root / e["labels"])
        defects = []
        for f in e["flaws"]:
            sp = f["spec"]
            defects.append(DefectSpec(sp["kind"], sp["size_mm"], tuple(sp["position_mm"]),
                                      sp["orientation_deg"], sp["contrast"], sp["width_mm"]))
        out.append(Sample(load_pgm16(root / e["image"], pitch),
                          load_mask(root / e["ground_truth"], "ground_truth"),
                          load_mask(root / e["weld"], "weld_region"),
                          defects, labels.astype(np.int32), e["id"]))
    return out

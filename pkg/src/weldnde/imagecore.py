"""Radiograph rasters, masks and the pixel-level primitives shared by the pipeline.

Pixel coordinates put pixel ``(x, y)`` at column ``x``, row ``y``; arrays are
indexed ``[y, x]``.  Every border extension uses whole-sample mirror
reflection (the edge pixel is not repeated), except :func:`gaussian_blur`
which uses half-sample symmetry so the image mean is preserved exactly.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

SEMANTICS = ("ground_truth", "weld_region", "prediction")


class FormatError(ValueError):
    """Malformed raster file."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale radiograph with intensities in [0, 1] and isotropic pixel pitch (mm)."""

    pixels: np.ndarray
    pixel_pitch: float = 0.1

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        if not np.all((px >= 0.0) & (px <= 1.0)):
            raise ValueError("intensities must lie in [0, 1]")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be positive")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels: np.ndarray, pixel_pitch: float | None = None) -> "GrayImage":
        return GrayImage(np.clip(pixels, 0.0, 1.0),
                         self.pixel_pitch if pixel_pitch is None else pixel_pitch)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray
    semantics: str = "ground_truth"
    pixel_pitch: float = 0.1

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        if self.semantics not in SEMANTICS:
            raise ValueError(f"unknown mask semantics {self.semantics!r}")
        bits = bits.astype(bool)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def with_bits(self, bits: np.ndarray) -> "BinaryMask":
        return BinaryMask(bits, self.semantics, self.pixel_pitch)


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping source pixel coordinates (x, y) to destination coordinates."""

    matrix: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0, 0], [0, 1.0, 0]]))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.linear))

    def as3x3(self) -> np.ndarray:
        return np.vstack([self.matrix, [0.0, 0.0, 1.0]])

    def then(self, other: "AffineTransform") -> "AffineTransform":
        """Composition: apply ``self`` first, then ``other``."""
        return AffineTransform((other.as3x3() @ self.as3x3())[:2])

    def inverse(self) -> "AffineTransform":
        if abs(self.determinant) < 1e-12:
            raise ValueError("singular affine transform")
        return AffineTransform(np.linalg.inv(self.as3x3())[:2])

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.array([[1.0, 0, 0], [0, 1.0, 0]])))

    # common constructors, all about an explicit centre (cx, cy)
    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0, tx], [0, 1.0, ty]]))

    @classmethod
    def about(cls, linear: np.ndarray, cx: float, cy: float) -> "AffineTransform":
        a = np.asarray(linear, dtype=np.float64)
        c = np.array([cx, cy])
        return cls(np.hstack([a, (c - a @ c)[:, None]]))

    @classmethod
    def rotation(cls, degrees: float, cx: float, cy: float) -> "AffineTransform":
        t = np.deg2rad(degrees)
        return cls.about([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]], cx, cy)


@dataclass(frozen=True, eq=False)
class InputStack:
    """Two-plane network input: plane 0 raw, plane 1 unsharp-masked."""

    planes: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != 2:
            raise ValueError(f"input stack must have shape (2, H, W), got {p.shape}")
        object.__setattr__(self, "planes", np.clip(p, 0.0, 1.0))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.planes.shape


# ---------------------------------------------------------------------------
# PGM I/O


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header")
    return data[start:pos], pos


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Raw P5 payload as integers, plus maxval."""
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        width, pos = _read_token(data, pos)
        height, pos = _read_token(data, pos)
        maxval, pos = _read_token(data, pos)
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: zero image dimension")
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid maxval {maxval}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"{path}: truncated pixel payload ({len(payload)} of {need} bytes)")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.int64), maxval


def write_pgm(path: str | os.PathLike, values: np.ndarray, maxval: int) -> None:
    values = np.asarray(values)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(dtype).tobytes())


def _sidecar(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".json")


def load_pgm16(path: str | os.PathLike, pixel_pitch: float | None = None) -> GrayImage:
    """Load a P5 PGM (maxval 255 or 65535) normalised to [0, 1].

    The pixel pitch comes from ``pixel_pitch`` or the ``<path>.json`` sidecar.
    """
    values, maxval = read_pgm(path)
    if pixel_pitch is None:
        side = _sidecar(path)
        if not side.exists():
            raise FormatError(f"{path}: no pixel pitch given and sidecar {side.name} missing")
        pixel_pitch = float(json.loads(side.read_text())["pixel_pitch_mm"])
    return GrayImage(values / maxval, pixel_pitch)


def save_pgm16(img: GrayImage, path: str | os.PathLike) -> None:
    """Write a 16-bit PGM plus a JSON sidecar carrying the pixel pitch."""
    q = np.rint(img.pixels * 65535.0).astype(np.uint16)
    write_pgm(path, q, 65535)
    _sidecar(path).write_text(json.dumps({"pixel_pitch_mm": img.pixel_pitch,
                                          "semantics": "image"}, sort_keys=True))


def save_mask(mask: BinaryMask, path: str | os.PathLike) -> None:
    """8-bit PGM with 0/255 encoding plus JSON sidecar."""
    write_pgm(path, mask.bits.astype(np.uint8) * 255, 255)
    _sidecar(path).write_text(json.dumps({"pixel_pitch_mm": mask.pixel_pitch,
                                          "semantics": mask.semantics}, sort_keys=True))


def load_mask(path: str | os.PathLike, semantics: str | None = None) -> BinaryMask:
    values, _ = read_pgm(path)
    meta = {}
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return BinaryMask(values > 0, semantics or meta.get("semantics", "ground_truth"),
                      float(meta.get("pixel_pitch_mm", 0.1)))


# ---------------------------------------------------------------------------
# filtering and resampling


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at +-ceil(3 sigma) and normalised to unit sum."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = int(np.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur_array(a: np.ndarray, sigma: float) -> np.ndarray:
    # filtering the deviation from one pixel keeps constant regions exactly constant
    k = gaussian_kernel(sigma)
    ref = a.flat[0]
    out = ndimage.correlate1d(a - ref, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect") + ref


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    return img.with_pixels(blur_array(img.pixels, sigma))


def unsharp_array(a: np.ndarray, sigma: float, amount: float) -> np.ndarray:
    if amount < 0:
        raise ValueError("amount must be >= 0")
    if amount == 0:
        return a.copy()
    return np.clip(a + amount * (a - blur_array(a, sigma)), 0.0, 1.0)


def unsharp_mask(img: GrayImage, sigma: float = 2.0, amount: float = 1.0) -> GrayImage:
    """``clamp(img + amount * (img - blur(img)), 0, 1)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return img.with_pixels(unsharp_array(img.pixels, sigma, amount))


def make_input_stack(img: GrayImage, sigma: float = 2.0, amount: float = 1.0) -> InputStack:
    return InputStack(np.stack([img.pixels, unsharp_mask(img, sigma, amount).pixels]))


def downsample2_array(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"downsampling needs even dimensions, got {w}x{h}")
    return a.reshape(*a.shape[:-2], h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def downsample2(img: GrayImage) -> GrayImage:
    """2x2 block mean; pixel pitch doubles."""
    return GrayImage(downsample2_array(img.pixels), img.pixel_pitch * 2.0)


def mirror_pad_array(a: np.ndarray, margin: int) -> np.ndarray:
    if margin < 0 or margin >= min(a.shape[-2:]):
        raise ValueError(f"margin {margin} must be in [0, {min(a.shape[-2:])})")
    pad = [(0, 0)] * (a.ndim - 2) + [(margin, margin), (margin, margin)]
    return np.pad(a, pad, mode="reflect")


def mirror_pad(img: GrayImage, margin: int) -> GrayImage:
    """Extend every border by ``margin`` pixels of mirror reflection."""
    return GrayImage(mirror_pad_array(img.pixels, margin), img.pixel_pitch)


def _reflect_coords(c: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(c)
    period = 2.0 * (n - 1)
    c = np.mod(c, period)
    return np.where(c > n - 1, period - c, c)


def warp_array(a: np.ndarray, t: AffineTransform, order: int, fill=None) -> np.ndarray:
    """Inverse-map resampling of a 2-D array (order 1 bilinear, 0 nearest).

    Samples outside the array are mirrored unless ``fill`` is given, in which
    case nearest-neighbour samples falling outside take that value.
    """
    if abs(t.determinant) < 1e-12:
        raise ValueError("singular affine transform")
    if t.is_identity():
        return a.copy()
    h, w = a.shape
    inv = t.inverse().matrix
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    if order == 0:
        rx, ry = np.floor(sx + 0.5), np.floor(sy + 0.5)
        ix = _reflect_coords(rx, w).astype(np.intp)
        iy = _reflect_coords(ry, h).astype(np.intp)
        out = a[iy, ix]
        if fill is not None:
            out[(rx < 0) | (rx > w - 1) | (ry < 0) | (ry > h - 1)] = fill
        return out
    sx = _reflect_coords(sx, w)
    sy = _reflect_coords(sy, h)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = a[y0, x0] * (1 - fx) + a[y0, x1] * fx
    bottom = a[y1, x0] * (1 - fx) + a[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def apply_affine(obj: GrayImage | BinaryMask, t: AffineTransform):
    """Resample an image (bilinear) or a mask (nearest) under ``t``."""
    if isinstance(obj, BinaryMask):
        return obj.with_bits(warp_array(obj.bits, t, order=0))
    if isinstance(obj, GrayImage):
        return obj.with_pixels(warp_array(obj.pixels, t, order=1))
    raise TypeError(f"cannot warp {type(obj).__name__}")


def crop(obj, top: int, left: int, height: int, width: int):
    """Rectangular crop of a GrayImage or BinaryMask."""
    if isinstance(obj, BinaryMask):
        return obj.with_bits(obj.bits[top:top + height, left:left + width])
    return GrayImage(obj.pixels[top:top + height, left:left + width], obj.pixel_pitch)


__all__ = [
    "AffineTransform", "BinaryMask", "FormatError", "GrayImage", "InputStack",
    "apply_affine", "crop", "downsample2", "gaussian_blur", "gaussian_kernel",
    "load_mask", "load_pgm16", "make_input_stack", "mirror_pad", "read_pgm",
    "save_mask", "save_pgm16", "unsharp_mask", "warp_array", "write_pgm",
]

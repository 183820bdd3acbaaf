"""Prediction mask -> indications with fitted shapes, classes and dispositions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import EIGHT, feret, min_enclosing_circle
from .imagecore import BinaryMask, GrayImage

CRACK_ASPECT = 3.0
CLASSES = ("crack_like", "porosity")


def connected_components(mask: BinaryMask | np.ndarray) -> list[np.ndarray]:
    """8-connected components as ``(n, 2)`` arrays of ``(row, col)``, ordered by (min row, min col)."""
    bits = mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(bits, structure=EIGHT)
    if n == 0:
        return []
    comps = [np.argwhere(labels == k) for k in range(1, n + 1)]
    comps.sort(key=lambda c: (int(c[:, 0].min()), int(c[:, 1].min())))
    return comps


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]  # (x, y) px
    radius_px: float

    def contains(self, xy: np.ndarray) -> np.ndarray:
        d = np.hypot(xy[:, 0] - self.center[0], xy[:, 1] - self.center[1])
        return d <= self.radius_px + 1e-9


@dataclass(frozen=True)
class Rectangle:
    center: tuple[float, float]  # (x, y) px
    length_px: float  # along ``angle``
    width_px: float
    angle: float  # radians, direction of the long side in (x, y)

    def corners(self) -> np.ndarray:
        u = np.array([math.cos(self.angle), math.sin(self.angle)])
        v = np.array([-u[1], u[0]])
        c = np.asarray(self.center)
        hl, hw = self.length_px / 2, self.width_px / 2
        return np.array([c - hl * u - hw * v, c + hl * u - hw * v,
                         c + hl * u + hw * v, c - hl * u + hw * v])

    def contains(self, xy: np.ndarray) -> np.ndarray:
        u = np.array([math.cos(self.angle), math.sin(self.angle)])
        v = np.array([-u[1], u[0]])
        d = xy - np.asarray(self.center)
        return ((np.abs(d @ u) <= self.length_px / 2 + 1e-9)
                & (np.abs(d @ v) <= self.width_px / 2 + 1e-9))


@dataclass(frozen=True, eq=False)
class Indication:
    pixels: np.ndarray  # (n, 2) row, col
    centroid_mm: tuple[float, float]  # (x, y)
    shape: Circle | Rectangle
    size_mm: float
    aspect_ratio: float
    cls: str
    pixel_pitch: float
    chain_id: int | None = None
    disposition: str | None = None

    def to_record(self) -> dict:
        return {"class": self.cls, "size_mm": round(self.size_mm, 6),
                "centroid_mm": [round(c, 6) for c in self.centroid_mm],
                "aspect_ratio": round(self.aspect_ratio, 6), "chain_id": self.chain_id,
                "disposition": self.disposition}


def fit_shape(component: np.ndarray, pixel_pitch: float) -> Indication:
    """Fit a circle (porosity) or a Feret-aligned rectangle (crack-like) around a component.

    Shapes enclose the pixel centres with half a pixel of clearance.
    """
    comp = np.asarray(component)
    if len(comp) == 0:
        raise ValueError("empty component")
    xy = comp[:, ::-1].astype(np.float64)
    fmax, fmin, angle = feret(xy)
    aspect = fmax / fmin
    if aspect >= CRACK_ASPECT:
        u = np.array([math.cos(angle), math.sin(angle)])
        v = np.array([-u[1], u[0]])
        pu, pv = xy @ u, xy @ v
        mu, mv = (pu.max() + pu.min()) / 2, (pv.max() + pv.min()) / 2
        centre = mu * u + mv * v
        shape = Rectangle((float(centre[0]), float(centre[1])),
                          float(pu.max() - pu.min() + 1), float(pv.max() - pv.min() + 1), angle)
        cls = "crack_like"
    else:
        c, r = min_enclosing_circle(xy)
        shape = Circle((float(c[0]), float(c[1])), float(r + 0.5))
        cls = "porosity"
    cx, cy = xy.mean(axis=0) * pixel_pitch
    return Indication(comp, (float(cx), float(cy)), shape, fmax * pixel_pitch, float(aspect),
                      cls, pixel_pitch)


def cluster_porosity(indications: list[Indication], proximity_d: float) -> list[int | None]:
    """Single-linkage chains of porosity indications (centroid distance <= ``proximity_d`` mm).

    Returns a chain id per indication (``None`` for singletons and crack-like
    indications). Ids are numbered by the chain's smallest (y, x) centroid so
    that they do not depend on input order.
    """
    if not proximity_d > 0:
        raise ValueError("proximity must be positive")
    idx = [i for i, d in enumerate(indications) if d.cls == "porosity"]
    parent = {i: i for i in idx}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pts = {i: np.asarray(indications[i].centroid_mm) for i in idx}
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = idx[a], idx[b]
            if np.hypot(*(pts[i] - pts[j])) <= proximity_d:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in idx:
        groups.setdefault(find(i), []).append(i)
    chains = [g for g in groups.values() if len(g) >= 2]
    chains.sort(key=lambda g: min((pts[i][1], pts[i][0]) for i in g))
    out: list[int | None] = [None] * len(indications)
    for cid, g in enumerate(chains):
        for i in g:
            out[i] = cid
    return out


@dataclass(frozen=True)
class AcceptanceRules:
    max_porosity_mm: float = 1.5
    max_crack_mm: float = math.inf  # only used when cracks are not always reportable
    chain_n: int = 3
    chain_d_mm: float = 5.0
    cracks_reportable: bool = True

    def __post_init__(self):
        if not (self.max_porosity_mm > 0 and self.max_crack_mm > 0 and self.chain_d_mm > 0):
            raise ValueError("acceptance sizes and distances must be positive")
        if self.chain_n < 2:
            raise ValueError("chain trigger needs at least 2 pores")


def apply_acceptance(indications: list[Indication], rules: AcceptanceRules | None = None) -> list[Indication]:
    rules = rules or AcceptanceRules()
    chain_size: dict[int, int] = {}
    for d in indications:
        if d.chain_id is not None:
            chain_size[d.chain_id] = chain_size.get(d.chain_id, 0) + 1
    out = []
    for d in indications:
        if d.cls == "crack_like":
            report = rules.cracks_reportable or d.size_mm > rules.max_crack_mm
        else:
            report = d.size_mm > rules.max_porosity_mm or (
                d.chain_id is not None and chain_size[d.chain_id] >= rules.chain_n)
        out.append(replace(d, disposition="reportable" if report else "acceptable"))
    return out


def analyze_mask(mask: BinaryMask, rules: AcceptanceRules | None = None) -> list[Indication]:
    """Components -> fitted shapes -> porosity chains -> dispositions."""
    rules = rules or AcceptanceRules()
    inds = [fit_shape(c, mask.pixel_pitch) for c in connected_components(mask)]
    chains = cluster_porosity(inds, rules.chain_d_mm)
    inds = [replace(d, chain_id=c) for d, c in zip(inds, chains)]
    return apply_acceptance(inds, rules)


def outline_pixels(shape: Circle | Rectangle, hw: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) of the 1 px outline just outside the shape, clipped to the image.

    The outline is the band of pixel centres between the shape boundary and
    the boundary grown by one pixel, so it never covers an enclosed pixel.
    """
    if isinstance(shape, Circle):
        reach = shape.radius_px + 1.0
    else:
        reach = math.hypot(shape.length_px, shape.width_px) / 2 + 1.0
    cx, cy = shape.center
    r0, r1 = max(int(math.floor(cy - reach)), 0), min(int(math.ceil(cy + reach)) + 1, hw[0])
    c0, c1 = max(int(math.floor(cx - reach)), 0), min(int(math.ceil(cx + reach)) + 1, hw[1])
    if r0 >= r1 or c0 >= c1:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    yy, xx = np.mgrid[r0:r1, c0:c1]
    dx, dy = xx - cx, yy - cy
    if isinstance(shape, Circle):
        d = np.hypot(dx, dy)
        band = (d > shape.radius_px + 1e-9) & (d <= shape.radius_px + 1.0)
    else:
        u = np.abs(dx * math.cos(shape.angle) + dy * math.sin(shape.angle))
        v = np.abs(-dx * math.sin(shape.angle) + dy * math.cos(shape.angle))
        hl, hw_ = shape.length_px / 2, shape.width_px / 2
        inside = (u <= hl + 1e-9) & (v <= hw_ + 1e-9)
        band = ~inside & (u <= hl + 1.0) & (v <= hw_ + 1.0)
    return yy[band], xx[band]


def render_overlay(img: GrayImage, indications: list[Indication]) -> GrayImage:
    """Acceptable indications outlined in black (0.0), reportable ones in white (1.0)."""
    out = np.array(img.pixels, dtype=np.float64)
    for d in indications:
        rr, cc = outline_pixels(d.shape, out.shape)
        out[rr, cc] = 1.0 if d.disposition == "reportable" else 0.0
    return img.with_pixels(out)


def report_json(indications: list[Indication]) -> str:
    return json.dumps([d.to_record() for d in indications], indent=1, sort_keys=True)

"""Pixel-set geometry: Feret diameters, enclosing shapes, component labelling.

Pixel sets are ``(n, 2)`` arrays of ``(x, y)`` pixel-centre coordinates.  A
caliper width counts whole pixels, so the width along a direction is the
spread of the projected centres plus one pixel; a single pixel is 1 px wide.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

N_DIRECTIONS = 16
EIGHT = np.ones((3, 3), dtype=bool)


def mask_points(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys]).astype(np.float64)


def caliper_widths(points: np.ndarray, n_dirs: int = N_DIRECTIONS):
    """Caliper widths (px) at ``n_dirs`` angles uniformly covering [0, pi)."""
    angles = np.arange(n_dirs) * np.pi / n_dirs
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    proj = points @ dirs.T
    return proj.max(axis=0) - proj.min(axis=0) + 1.0, angles


def feret(points: np.ndarray, n_dirs: int = N_DIRECTIONS) -> tuple[float, float, float]:
    """(max Feret px, min Feret px, angle of the max direction in radians)."""
    if len(points) == 0:
        raise ValueError("empty pixel set")
    widths, angles = caliper_widths(points, n_dirs)
    i = int(np.argmax(widths))
    return float(widths[i]), float(widths.min()), float(angles[i])


def max_feret_mm(mask: np.ndarray, pitch: float) -> float:
    return feret(mask_points(mask))[0] * pitch


def _circle_two(a, b):
    c = (a + b) / 2.0
    return c, float(np.hypot(*(a - c)))


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-12:
        pts = [a, b, c]
        pairs = [(pts[i], pts[j]) for i in range(3) for j in range(i + 1, 3)]
        return max((_circle_two(p, q) for p, q in pairs), key=lambda t: t[1])
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    centre = np.array([ux, uy])
    return centre, float(np.hypot(*(a - centre)))


def min_enclosing_circle(points: np.ndarray, seed: int = 0) -> tuple[np.ndarray, float]:
    """Smallest circle containing all points (iterative Welzl, expected linear time)."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) == 1:
        return pts[0].copy(), 0.0
    pts = pts[np.random.default_rng(seed).permutation(len(pts))]
    tol = 1e-9

    def inside(c, r, p):
        return np.hypot(*(p - c)) <= r + tol

    c, r = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if inside(c, r, pts[i]):
            continue
        c, r = pts[i].copy(), 0.0
        for j in range(i):
            if inside(c, r, pts[j]):
                continue
            c, r = _circle_two(pts[i], pts[j])
            for k in range(j):
                if not inside(c, r, pts[k]):
                    c, r = _circle_three(pts[i], pts[j], pts[k])
    return c, r


def hull_points(points: np.ndarray) -> np.ndarray:
    """Convex-hull vertices of the pixel centres (all points if degenerate)."""
    from scipy.spatial import ConvexHull, QhullError
    pts = np.unique(points, axis=0)
    if len(pts) < 3:
        return pts
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:  # collinear
        return pts


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labelling; labels ordered by (min row, min col) of each component."""
    labels, n = ndimage.label(mask, structure=EIGHT)
    return labels, n

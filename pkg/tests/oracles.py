"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import math
from collections import deque

import numpy as np


def convex_hull(points):
    """Andrew's monotone chain on (x, y) tuples; returns CCW hull without repetition."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def exact_feret(points):
    """(max, min) caliper widths over all directions, in px, with the +1 pixel convention.

    Max is the point-set diameter; min is the smallest hull-edge width
    (rotating calipers), both plus one pixel.
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return 1.0, 1.0
    diam = max(math.dist(a, b) for a in hull for b in hull)
    if len(hull) == 2:
        return diam + 1.0, 1.0
    best = math.inf
    n = len(hull)
    for i in range(n):
        a, b = np.array(hull[i], float), np.array(hull[(i + 1) % n], float)
        e = b - a
        normal = np.array([-e[1], e[0]]) / np.hypot(*e)
        proj = [float(np.dot(np.array(p, float) - a, normal)) for p in hull]
        best = min(best, max(proj) - min(proj))
    return diam + 1.0, best + 1.0


def flood_fill_components(mask):
    """8-connected components by BFS, as sorted lists of (row, col)."""
    mask = np.asarray(mask, dtype=bool)
    seen = np.zeros_like(mask)
    h, w = mask.shape
    comps = []
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                q = deque([(r, c)])
                seen[r, c] = True
                comp = []
                while q:
                    y, x = q.popleft()
                    comp.append((y, x))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy, xx = y + dy, x + dx
                            if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not seen[yy, xx]:
                                seen[yy, xx] = True
                                q.append((yy, xx))
                comps.append(sorted(comp))
    return comps


def single_linkage(points, d):
    """Brute-force single-linkage clusters (sets of indices) by repeated merging."""
    clusters = [{i} for i in range(len(points))]
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if any(math.dist(points[a], points[b]) <= d for a in clusters[i] for b in clusters[j]):
                    clusters[i] |= clusters.pop(j)
                    merged = True
                    break
            if merged:
                break
    return clusters

"""Dependency-free SVG line plots and the markdown summary used by ``report``."""
from __future__ import annotations

import math
import os
import platform
from xml.sax.saxutils import escape

import numpy as np

from .evalnde.experiment import MetricsRow, _fmt

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 600, 40, 340
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

# metric field -> (file stem, axis label)
METRIC_PLOTS = {
    "a90_95": ("a90_95", "a90/95 (mm)"),
    "sizing_rms": ("sizing_error", "RMS sizing error (mm)"),
    "fc_per_10cm_weld": ("false_calls_weld", "false calls per 100 mm weld"),
    "fc_per_image": ("false_calls_image", "false calls per image"),
}


def _scale(v, lo, hi, a, b):
    if hi == lo:
        return (a + b) / 2.0
    return a + (v - lo) * (b - a) / (hi - lo)


def svg_plot(series: dict, title: str, xlabel: str, ylabel: str, logx: bool = False) -> str:
    """Polyline plot of ``{name: (xs, ys)}``; non-finite points are dropped.

    The root element carries the data extents as ``data-xmin`` etc.; the plot
    area spans x in [LEFT, RIGHT] and y in [TOP, BOTTOM] (y grows downward).
    """
    pts = {}
    for name, (xs, ys) in series.items():
        xy = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if logx:
            xy = [(x, y) for x, y in xy if x > 0]
        pts[name] = sorted(xy)
    allx = [x for v in pts.values() for x, _ in v]
    ally = [y for v in pts.values() for _, y in v]
    if not allx:
        raise ValueError(f"plot {title!r} has no finite data")
    xmin, xmax, ymin, ymax = min(allx), max(allx), min(ally), max(ally)
    tx = (lambda x: math.log(x)) if logx else (lambda x: x)
    lx, hx = tx(xmin), tx(xmax)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'data-xmin="{xmin:.10g}" data-xmax="{xmax:.10g}" data-ymin="{ymin:.10g}" '
           f'data-ymax="{ymax:.10g}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>',
           f'<text class="tick" x="{LEFT}" y="{BOTTOM + 16}" text-anchor="middle" font-size="11">{xmin:.4g}</text>',
           f'<text class="tick" x="{RIGHT}" y="{BOTTOM + 16}" text-anchor="middle" font-size="11">{xmax:.4g}</text>',
           f'<text class="tick" x="{LEFT - 6}" y="{BOTTOM}" text-anchor="end" font-size="11">{ymin:.4g}</text>',
           f'<text class="tick" x="{LEFT - 6}" y="{TOP + 4}" text-anchor="end" font-size="11">{ymax:.4g}</text>',
           f'<text x="{(LEFT + RIGHT) / 2}" y="{HEIGHT - 22}" text-anchor="middle" font-size="12">'
           f'{escape(xlabel)}{" (log scale)" if logx else ""}</text>',
           f'<text x="16" y="{(TOP + BOTTOM) / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {(TOP + BOTTOM) / 2})">{escape(ylabel)}</text>']
    for i, (name, xy) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{_scale(tx(x), lx, hx, LEFT, RIGHT):.2f},{_scale(y, ymin, ymax, BOTTOM, TOP):.2f}"
                          for x, y in xy)
        out.append(f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" '
                   f'stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{RIGHT - 4}" y="{TOP + 14 + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def metric_plots(rows: list[MetricsRow]) -> dict[str, str]:
    """One SVG per metric: worst-of-folds value against training fraction, one line per strategy."""
    worst = [r for r in rows if r.fold == "worst"] or rows
    strategies = sorted({r.strategy for r in worst})
    plots = {}
    for field_, (stem, label) in METRIC_PLOTS.items():
        series = {}
        for s in strategies:
            rs = sorted((r for r in worst if r.strategy == s), key=lambda r: r.fraction)
            series[s] = ([r.fraction for r in rs], [getattr(r, field_) for r in rs])
        try:
            plots[stem] = svg_plot(series, label + " vs training fraction", "training fraction",
                                   label, logx=True)
        except ValueError:
            plots[stem] = _empty_svg(label + ": no finite values")
    return plots


def _empty_svg(msg: str) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">\n'
            f'<text x="{WIDTH / 2}" y="{HEIGHT / 2}" text-anchor="middle">{escape(msg)}</text>\n</svg>\n')


def pod_plot(a, pod, lo, title: str) -> str:
    return svg_plot({"POD": (a, pod), "lower 95% bound": (a, lo)}, title, "flaw size a (mm)", "POD",
                    logx=True)


def machine_description() -> dict:
    return {"machine": platform.machine(), "processor": platform.processor() or "unknown",
            "system": platform.system(), "python": platform.python_version(),
            "cpus": os.cpu_count(), "numpy": np.__version__}


def summary_markdown(rows: list[MetricsRow], benchmark: dict | None = None) -> str:
    worst = [r for r in rows if r.fold == "worst"]
    lines = ["# Experiment summary", "", "Worst-of-folds metrics per strategy and training fraction.", "",
             "| strategy | fraction | a90 (mm) | a90/95 (mm) | sizing mean (mm) | sizing RMS (mm) "
             "| FC / 100 mm weld | FC / image |",
             "|---|---|---|---|---|---|---|---|"]
    for r in worst:
        lines.append(f"| {r.strategy} | {_fmt(r.fraction)} | {_fmt(r.a90)} | {_fmt(r.a90_95)} | "
                     f"{_fmt(r.sizing_mean)} | {_fmt(r.sizing_rms)} | {_fmt(r.fc_per_10cm_weld)} | "
                     f"{_fmt(r.fc_per_image)} |")
    lines += ["", "`inf` marks an a90/95 that could not be demonstrated (lower band never reaches 0.9)."]
    if benchmark:
        m = benchmark.get("machine", {})
        lines += ["", "## Inference throughput", "",
                  f"- median per tile: {benchmark['median_ms_per_tile']:.3f} ms "
                  f"({benchmark['tiles_per_s']:.1f} tiles/s, {benchmark['n_tiles']} tiles, "
                  f"{benchmark.get('tile_px', '?')} px tiles)",
                  f"- machine: {m.get('machine')} / {m.get('processor')} / {m.get('system')}, "
                  f"{m.get('cpus')} logical CPUs, Python {m.get('python')}, numpy {m.get('numpy')}",
                  "- context: the published GPU figure for this kind of network is 6.3 ms per patch; "
                  "it is not comparable with this single-threaded numpy CPU measurement."]
    return "\n".join(lines) + "\n"

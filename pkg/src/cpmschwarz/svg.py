"""Minimal SVG 1.1 line-plot writer (axes, optional log y-axis, legend)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "line_plot"]

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False
    markers: bool = False


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw),
               default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(path, series, xlabel="", ylabel="", title="", logy=False,
              width=640, height=420):
    """Write ``series`` as polylines to an SVG file at ``path``."""
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def ty(v):
        return np.log10(v) if logy else v

    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series])
    if logy:
        ys = ys[ys > 0]
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    if x1 == x0:
        x1 = x0 + 1.0
    if logy:
        y0 = math.floor(np.log10(np.min(ys)))
        y1 = math.ceil(np.log10(np.max(ys)))
        if y1 == y0:
            y1 = y0 + 1
        yticks = list(range(y0, y1 + 1, max(1, (y1 - y0 + 7) // 8)))
    else:
        y0, y1 = float(np.min(ys)), float(np.max(ys))
        pad = 0.05 * (y1 - y0 or 1.0)
        y0, y1 = y0 - pad, y1 + pad
        yticks = _nice_ticks(y0, y1)

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" font-family="sans-serif" '
        f'font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" '
        f'fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        if x0 <= t <= x1:
            out.append(f'<line x1="{px(t):.2f}" y1="{top + ph}" '
                       f'x2="{px(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(t):.2f}" y="{top + ph + 18}" '
                       f'text-anchor="middle">{t:g}</text>')
    for t in yticks:
        if y0 <= t <= y1:
            label = f"1e{t}" if logy else f"{t:g}"
            out.append(f'<line x1="{left - 5}" y1="{py(t):.2f}" x2="{left}" '
                       f'y2="{py(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{py(t) + 4:.2f}" '
                       f'text-anchor="end">{label}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">'
               f'{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="{top - 15}" '
                   f'text-anchor="middle" font-size="14">{escape(title)}</text>')

    for k, s in enumerate(series):
        colour = _COLOURS[k % len(_COLOURS)]
        x = np.asarray(s.x, float)
        y = np.asarray(s.y, float)
        keep = (y > 0) if logy else np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(ty(b)):.2f}"
                       for a, b in zip(x[keep], y[keep]))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" '
                   f'stroke-width="1.5"{dash}/>')
        if s.markers:
            for a, b in zip(x[keep], y[keep]):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(ty(b)):.2f}" '
                           f'r="2.5" fill="{colour}"/>')
        ly = top + 15 + 18 * k
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" '
                   f'x2="{left + pw + 35}" y2="{ly}" stroke="{colour}" '
                   f'stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{left + pw + 40}" y="{ly + 4}">'
                   f'{escape(s.label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")

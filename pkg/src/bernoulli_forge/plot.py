"""Standalone SVG plots of periodic curves.

One period is drawn with half a period on each side, so defects at the
periodic seam are visible.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .geom import PeriodicArc

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _extended(arc: PeriodicArc) -> np.ndarray:
    """Vertices covering x in [-P/2, 3P/2]."""
    P = arc.period
    v = arc.vertices
    parts = [v + np.array([k * P, 0.0]) for k in (-1, 0, 1)]
    pts = np.vstack(parts)
    keep = (pts[:, 0] >= -0.5 * P - 1e-12) & (pts[:, 0] <= 1.5 * P + 1e-12)
    return pts[keep]


def svg_text(arcs: list[PeriodicArc], width: int = 900, height: int = 400, title: str = "", colors=None) -> str:
    if not arcs:
        raise ValueError("nothing to plot")
    P = arcs[0].period
    ys = np.concatenate([a.vertices[:, 1] for a in arcs])
    y0, y1 = float(ys.min()), float(ys.max())
    pad = 0.1 * max(y1 - y0, 1e-3)
    y0, y1 = y0 - pad, y1 + pad
    x0, x1 = -0.5 * P, 1.5 * P
    m = 30

    def sx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def sy(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for xs in (0.0, P):
        out.append(f'<line x1="{sx(xs):.2f}" y1="{m}" x2="{sx(xs):.2f}" y2="{height - m}" stroke="#bbb" stroke-dasharray="4 3"/>')
    colors = colors or PALETTE
    for k, arc in enumerate(arcs):
        pts = _extended(arc)
        d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{colors[k % len(colors)]}" stroke-width="1.2" points="{d}"/>')
    if title:
        out.append(f'<text x="{m}" y="{m - 10}" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, arcs: list[PeriodicArc], **kw) -> Path:
    path = Path(path)
    path.write_text(svg_text(arcs, **kw))
    return path

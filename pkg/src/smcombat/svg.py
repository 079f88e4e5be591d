"""Minimal line-chart SVG writer (no plotting dependency).

Fixed 640x480 viewBox, one ``<polyline>`` per series, dash styles cycled
solid, dotted, dashed, long-dashed, dash-dot, a tick per x sample and a
legend entry (short ``<line>`` sample plus ``<text>`` label) per series.
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 120, 40, 50
DASHES = ("", "4 8", "20 20", "40 20", "40 20 12 20")
COLORS = ("#000000", "#1f4e9c", "#b22222", "#2e7d32", "#6a1b9a", "#ef6c00")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_range(lo: float, hi: float):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0, 1.0
    if hi == lo:
        pad = abs(hi) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(x: Sequence[float], series: Mapping[str, Sequence[float]], title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    y0, y1 = _nice_range(float(finite.min(initial=0.0)), float(finite.max(initial=1.0)))
    x0, x1 = (float(x[0]), float(x[-1])) if len(x) > 1 and x[-1] > x[0] else (float(x[0]) - 1, float(x[0]) + 1)
    pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(v):
        return MARGIN_LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN_TOP + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
           f'width="{WIDTH}" height="{HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
           f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>',
           '<g class="xticks">']
    for v in x:
        xp = _f(px(v))
        out.append(f'<line x1="{xp}" y1="{MARGIN_TOP + ph}" x2="{xp}" y2="{MARGIN_TOP + ph + 5}" stroke="#000000"/>')
        out.append(f'<text x="{xp}" y="{MARGIN_TOP + ph + 18}" text-anchor="middle">{v:g}</text>')
    out.append('</g>')
    out.append('<g class="yticks">')
    for v in np.linspace(y0, y1, 6):
        yp = _f(py(v))
        out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{yp}" x2="{MARGIN_LEFT}" y2="{yp}" stroke="#000000"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{yp}" text-anchor="end" dominant-baseline="middle">{v:.3g}</text>')
    out.append('</g>')
    out.append(f'<text x="{MARGIN_LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN_TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_TOP + ph / 2:.2f})">{escape(ylabel)}</text>')
    for i, (name, v) in enumerate(ys.items()):
        dash = DASHES[i % len(DASHES)]
        style = f' stroke-dasharray="{dash}"' if dash else ""
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x, v) if np.isfinite(b))
        out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"{style}/>')
        ly = MARGIN_TOP + 14 + 18 * i
        lx = WIDTH - MARGIN_RIGHT + 10
        out.append(f'<line class="legend-sample" x1="{lx}" y1="{ly}" x2="{lx + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="1.5"{style}/>')
        out.append(f'<text class="legend" x="{lx + 36}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"

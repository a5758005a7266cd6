"""Static SVG line charts written without any plotting backend."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT, MARGIN = 720, 440, 60


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def line_chart(x, series: dict, xlabel: str = "", ylabel: str = "", title: str = "") -> str:
    """SVG text for one or more curves over a shared ``x``.

    The data window is recorded in ``data-x-range``/``data-y-range`` attributes
    so that coordinates can be mapped back to data values.
    """
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(v):
        return MARGIN + (v - x0) / (x1 - x0) * pw

    def py(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<g id="plot" data-x-range="{x0!r} {x1!r}" data-y-range="{y0!r} {y1!r}" '
           f'data-box="{MARGIN} {MARGIN} {pw} {ph}">',
           f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.2f}" y="{HEIGHT - MARGIN + 18}" font-size="11" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 6}" y="{py(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.3g}</text>')
    for i, (name, y) in enumerate(ys.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.6f},{py(b):.6f}" for a, b in zip(x[ok], y[ok]))
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline data-name="{escape(name)}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN + 6}" y="{MARGIN + 14 * (i + 1)}" font-size="12" fill="{color}">{escape(name)}</text>')
    out.append("</g>")
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 14}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2}" font-size="13" transform="rotate(-90 16 {HEIGHT / 2})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="24" font-size="15" text-anchor="middle">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_polylines(svg: str) -> dict:
    """Recover ``{name: (x, y)}`` in data coordinates from :func:`line_chart` output."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg)
    ns = {"s": "http://www.w3.org/2000/svg"}
    g = root.find("s:g", ns)
    x0, x1 = map(float, g.get("data-x-range").split())
    y0, y1 = map(float, g.get("data-y-range").split())
    mx, my, pw, ph = map(float, g.get("data-box").split())
    out = {}
    for pl in g.findall("s:polyline", ns):
        pts = np.array([[float(c) for c in p.split(",")] for p in pl.get("points").split()])
        xs = x0 + (pts[:, 0] - mx) / pw * (x1 - x0)
        ys = y0 + (my + ph - pts[:, 1]) / ph * (y1 - y0)
        out[pl.get("data-name")] = (xs, ys)
    return out

"""Minimal hand-written SVG line and scatter plots."""
from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple
    style: str = "line"  # line | points | both


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def plot(series, title: str = "", xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 420) -> str:
    """SVG text for a set of series sharing linear axes."""
    series = [s for s in series if len(s.x)]
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([np.asarray(s.x, float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s.y, float) for s in series]) if series else np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else max(abs(y0) * 0.1, 0.5)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_num(px(t))}" y1="{mt + ph}" x2="{_num(px(t))}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(px(t))}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{_num(py(t))}" x2="{ml}" y2="{_num(py(t))}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{_num(py(t) + 4)}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(float(x)), py(float(y))) for x, y in zip(s.x, s.y)]
        if s.style in ("line", "both"):
            d = " ".join(f"{'M' if k == 0 else 'L'}{_num(a)},{_num(b)}" for k, (a, b) in enumerate(pts))
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        if s.style in ("points", "both"):
            out += [f'<circle cx="{_num(a)}" cy="{_num(b)}" r="3" fill="{color}"/>' for a, b in pts]
        ly = mt + 15 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

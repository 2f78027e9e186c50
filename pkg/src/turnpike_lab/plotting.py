"""Minimal dependency-free SVG line plots."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def line_plot(path, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False, floor: float = 1e-300) -> Path:
    """Write ``series = {label: (x, y)}`` (or ``{label: (x, y, style)}``) as an SVG.

    ``logy`` plots ``log10 y``; non-positive values are clipped at ``floor``.
    A style of ``"dashed"`` draws a dashed black line (used for bounds).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prepared = []
    for label, s in series.items():
        x = np.asarray(s[0], dtype=float)
        y = np.asarray(s[1], dtype=float)
        style = s[2] if len(s) > 2 else None
        if logy:
            y = np.log10(np.maximum(y, floor))
        prepared.append((label, x, y, style))
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if logy:
        y0, y1 = math.floor(y0), math.ceil(y1)
    if y1 == y0:
        y1 = y0 + 1.0
    if x1 == x0:
        x1 = x0 + 1.0
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1):
        out.append(f'<text x="{sx(v):.2f}" y="{TOP + ph + 15}" text-anchor="middle">{_fmt(v)}</text>')
    if logy:
        step = max(1, int(math.ceil((y1 - y0) / 8)))
        yt = [float(v) for v in range(int(y0), int(y1) + 1, step)]
    else:
        yt = _ticks(y0, y1)
    for v in yt:
        lab = f"1e{int(v)}" if logy else _fmt(v)
        out.append(f'<line x1="{LEFT - 4}" y1="{sy(v):.2f}" x2="{LEFT}" y2="{sy(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{sy(v) + 4:.2f}" text-anchor="end">{lab}</text>')
    for i, (label, x, y, style) in enumerate(prepared):
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        if style == "dashed":
            color, extra = "black", ' stroke-dasharray="6,4"'
        else:
            color, extra = PALETTE[i % len(PALETTE)], ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{pts}"/>')
        ly = TOP + 12 + 16 * i
        out.append(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 30}" y2="{ly}" stroke="{color}"{extra}/>')
        out.append(f'<text x="{W - RIGHT + 35}" y="{ly + 4}">{escape(str(label))}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2}" y="{TOP - 10}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{LEFT + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path

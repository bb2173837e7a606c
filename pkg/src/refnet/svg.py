"""Minimal hand-written SVG plots.

Coordinates are printed with fixed precision so the files are byte-stable.
Each plot has a CSV twin written by the caller; the SVG is never the only record.
"""

from __future__ import annotations

import math
from html import escape

import numpy as np

W, H = 480, 360
ML, MR, MT, MB = 60, 20, 30, 50
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _frame(title: str, xlabel: str, ylabel: str, body: list[str], xticks, yticks) -> str:
    pw, ph = W - ML - MR, H - MT - MB
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{ML + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{MT + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {MT + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for px, lab in xticks:
        out.append(f'<line x1="{_f(px)}" y1="{MT + ph}" x2="{_f(px)}" y2="{MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_f(px)}" y="{MT + ph + 18}" text-anchor="middle" font-size="10">{escape(lab)}</text>')
    for py, lab in yticks:
        out.append(f'<line x1="{ML - 5}" y1="{_f(py)}" x2="{ML}" y2="{_f(py)}" stroke="black"/>')
        out.append(f'<text x="{ML - 8}" y="{_f(py + 3)}" text-anchor="end" font-size="10">{escape(lab)}</text>')
    out.extend(body)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def loglog_ccdf(x, p, title: str = "CCDF", xlabel: str = "degree", fit=None) -> str:
    """Log-log complementary CDF; ``fit`` = (alpha, xmin, tail_mass) overlays
    the fitted power-law slope from xmin."""
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    ok = (x > 0) & (p > 0)
    x, p = x[ok], p[ok]
    if not len(x):
        return _frame(title, xlabel, "P(X >= x)", ['<text x="240" y="180" text-anchor="middle">no data</text>'], [], [])
    lx, lp = np.log10(x), np.log10(p)
    x0, x1 = math.floor(lx.min()), max(math.ceil(lx.max()), math.floor(lx.min()) + 1)
    y0, y1 = min(math.floor(lp.min()), -1), 0
    sx = _scale(x0, x1, ML, W - MR)
    sy = _scale(y0, y1, H - MB, MT)
    body = [f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="1.8" fill="{_PALETTE[0]}"/>' for a, b in zip(lx, lp)]
    if fit is not None:
        alpha, xmin, mass = fit
        if xmin > 0 and mass > 0:
            xa, xb = math.log10(xmin), x1
            ya = math.log10(mass)
            yb = ya - (alpha - 1) * (xb - xa)
            if yb < y0:
                xb = xa + (ya - y0) / (alpha - 1)
                yb = y0
            body.append(f'<line x1="{_f(sx(xa))}" y1="{_f(sy(ya))}" x2="{_f(sx(xb))}" y2="{_f(sy(yb))}" '
                        f'stroke="{_PALETTE[1]}" stroke-width="1.5"/>')
            body.append(f'<text x="{W - MR - 5}" y="{MT + 15}" text-anchor="end" font-size="11">'
                        f'alpha={alpha:.3f}, xmin={int(xmin)}</text>')
    xt = [(sx(e), f"1e{e}") for e in range(x0, x1 + 1)]
    yt = [(sy(e), f"1e{e}") for e in range(y0, y1 + 1)]
    return _frame(title, xlabel, "P(X >= x)", body, xt, yt)


def histogram(values, bins: int = 20, title: str = "Histogram", xlabel: str = "value",
              lo: float | None = None, hi: float | None = None) -> str:
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    lo = float(v.min()) if lo is None and len(v) else (0.0 if lo is None else lo)
    hi = float(v.max()) if hi is None and len(v) else (1.0 if hi is None else hi)
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    top = max(int(counts.max()) if len(counts) else 1, 1)
    sx = _scale(lo, hi, ML, W - MR)
    sy = _scale(0, top, H - MB, MT)
    body = []
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c:
            body.append(f'<rect x="{_f(sx(a))}" y="{_f(sy(c))}" width="{_f(sx(b) - sx(a))}" '
                        f'height="{_f(sy(0) - sy(c))}" fill="{_PALETTE[0]}" stroke="white"/>')
    xt = [(sx(t), f"{t:g}") for t in _linear_ticks(lo, hi)]
    yt = [(sy(t), f"{t:g}") for t in _linear_ticks(0, top)]
    return _frame(title, xlabel, "count", body, xt, yt)


def scatter(coords, labels=(), groups=None, title: str = "MDS", xlabel: str = "dim 1", ylabel: str = "dim 2") -> str:
    c = np.asarray(coords, dtype=np.float64).reshape(len(coords), -1)
    if c.shape[1] == 1:
        c = np.column_stack([c[:, 0], np.zeros(len(c))])
    if not len(c):
        return _frame(title, xlabel, ylabel, [], [], [])
    pad = lambda lo, hi: (lo - 0.05 * (hi - lo or 1), hi + 0.05 * (hi - lo or 1))
    x0, x1 = pad(c[:, 0].min(), c[:, 0].max())
    y0, y1 = pad(c[:, 1].min(), c[:, 1].max())
    sx = _scale(x0, x1, ML, W - MR)
    sy = _scale(y0, y1, H - MB, MT)
    body = []
    labels = list(labels)
    for i, (a, b) in enumerate(c[:, :2]):
        col = _PALETTE[int(groups[i]) % len(_PALETTE)] if groups is not None else _PALETTE[0]
        body.append(f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="3" fill="{col}"/>')
        if i < len(labels):
            body.append(f'<text x="{_f(sx(a) + 4)}" y="{_f(sy(b) - 3)}" font-size="8">{escape(str(labels[i]))}</text>')
    xt = [(sx(t), f"{t:g}") for t in _linear_ticks(x0, x1)]
    yt = [(sy(t), f"{t:g}") for t in _linear_ticks(y0, y1)]
    return _frame(title, xlabel, ylabel, body, xt, yt)

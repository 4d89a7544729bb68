"""Small deterministic SVG writer for the experiment figures.

Only polylines, markers, rectangles and text are needed, so this avoids a
charting dependency. Output depends only on the input numbers, which keeps
figures diffable across runs.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .guidance import Path
from .world_sim import Field, TrialTrace

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

_W, _H = 640, 440
_MARGIN = (70, 20, 30, 55)  # left, right, top, bottom


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, width=_W, height=_H):
        self.width, self.height = width, height
        self.items: List[str] = []

    def add(self, s: str):
        self.items.append(s)

    def line(self, x0, y0, x1, y1, stroke="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" '
                 f'stroke="{stroke}" stroke-width="{width}"{d}/>')

    def polyline(self, pts, stroke, width=1.5, dash=None):
        if len(pts) < 2:
            return
        d = f' stroke-dasharray="{dash}"' if dash else ""
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.add(f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
                 f'stroke-width="{width}"{d}/>')

    def circle(self, x, y, r, fill):
        self.add(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{r}" fill="{fill}"/>')

    def rect(self, x, y, w, h, fill="none", stroke="none", opacity=1.0):
        self.add(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
                 f'fill="{fill}" stroke="{stroke}" fill-opacity="{opacity}"/>')

    def text(self, x, y, s, size=12, anchor="start", rotate=None):
        t = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" font-family="sans-serif" '
                 f'text-anchor="{anchor}"{t}>{escape(s)}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        body = "\n".join(self.items)
        return f'{head}\n<rect width="100%" height="100%" fill="#fff"/>\n{body}\n</svg>\n'


def _nice_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    return [round(v, 12) for v in np.arange(start, hi + step * 1e-6, step)]


def _tick_label(v: float) -> str:
    return f"{v:g}"


def line_chart(series: Dict[str, Tuple[Sequence[float], Sequence[float]]], *,
               title: str = "", xlabel: str = "", ylabel: str = "",
               log_x: bool = False, errors: Optional[Dict[str, Sequence[float]]] = None) -> str:
    """SVG line chart of named ``(x, y)`` series, optionally on a log x axis.

    ``errors`` maps series names to symmetric error-bar half-heights.
    """
    if not series:
        raise ValueError("no series to plot")
    cv = _Canvas()
    left, right, top, bottom = _MARGIN
    pw, ph = cv.width - left - right, cv.height - top - bottom
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    errs = errors or {}
    if errs:
        hi = [np.asarray(y, float) + np.asarray(errs.get(k, np.zeros(len(y))), float)
              for k, (_, y) in series.items()]
        ys = np.concatenate([ys] + hi)
    ys = ys[np.isfinite(ys)]
    if log_x:
        if np.any(xs <= 0):
            raise ValueError("log x axis needs positive x values")
        tx = np.log10
    else:
        tx = lambda v: np.asarray(v, float)  # noqa: E731
    x0, x1 = float(np.min(tx(xs))), float(np.max(tx(xs)))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = 0.0, float(np.max(ys)) if ys.size else 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    y1 *= 1.05

    def px(v):
        return left + (float(tx(v)) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    cv.rect(left, top, pw, ph, stroke="#444")
    for v in _nice_ticks(y0, y1):
        cv.line(left, py(v), left + pw, py(v), stroke="#ddd")
        cv.text(left - 6, py(v) + 4, _tick_label(v), size=11, anchor="end")
    if log_x:
        xt = [10.0 ** e for e in range(math.floor(x0), math.ceil(x1) + 1)]
        xt = [v for v in xt if x0 - 1e-9 <= math.log10(v) <= x1 + 1e-9]
        xt += [float(v) for v in np.unique(xs) if float(v) not in xt]
        xt.sort()
    else:
        xt = _nice_ticks(x0, x1)
    for v in xt:
        cv.line(px(v), top + ph, px(v), top + ph + 5, stroke="#444")
        cv.text(px(v), top + ph + 18, _tick_label(v), size=11, anchor="middle")
    for i, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(a), py(b)) for a, b in zip(x, y) if math.isfinite(b)]
        cv.polyline(pts, color, 2.0)
        for (a, b) in pts:
            cv.circle(a, b, 3, color)
        if name in errs:
            for a, b, e in zip(x, y, errs[name]):
                if math.isfinite(b) and e > 0:
                    cv.line(px(a), py(b - e), px(a), py(b + e), stroke=color)
        ly = top + 16 + 16 * i
        cv.line(left + pw - 150, ly - 4, left + pw - 130, ly - 4, stroke=color, width=2)
        cv.text(left + pw - 125, ly, name, size=12)
    cv.text(cv.width / 2, 18, title, size=14, anchor="middle")
    cv.text(left + pw / 2, cv.height - 12, xlabel, anchor="middle")
    cv.text(16, top + ph / 2, ylabel, anchor="middle", rotate=-90)
    return cv.render()


def trajectory_plot(trace: TrialTrace, path: Path, fld: Field, title: str = "") -> str:
    """Field-scale overlay of path, truth and estimate.

    Ticks where a landmark was in view are marked along the truth trace;
    landmarks are drawn on the walls.
    """
    scale = 3.0
    pad = 30
    cv = _Canvas(int(fld.width * scale + 2 * pad), int(fld.height * scale + 2 * pad + 20))

    def p(x, y):
        return pad + x * scale, pad + 20 + (fld.height - y) * scale

    cv.rect(*p(0, fld.height), fld.width * scale, fld.height * scale, fill="#f7f7f7", stroke="#444")
    vis = trace.visible
    for k in np.flatnonzero(vis):
        cv.circle(*p(*trace.truth[k, :2]), 2.5, "#ffd54f")
    cv.polyline([p(x, y) for x, y in path.waypoints], "#999", 1.5, dash="4 3")
    cv.polyline([p(x, y) for x, y in trace.truth[:, :2]], PALETTE[0], 1.5)
    cv.polyline([p(x, y) for x, y in trace.estimate[:, :2]], PALETTE[1], 1.2)
    for lm in fld.landmarks:
        x, y = p(lm.x, lm.y)
        cv.rect(x - 4, y - 4, 8, 8, fill="#2ca02c")
    cv.circle(*p(*path.start), 4, "#000")
    legend = [("path", "#999"), ("truth", PALETTE[0]), ("estimate", PALETTE[1]),
              ("landmark in view", "#ffd54f")]
    for i, (name, color) in enumerate(legend):
        x = pad + 110 * i
        cv.line(x, 14, x + 18, 14, stroke=color, width=3)
        cv.text(x + 22, 18, name, size=11)
    if title:
        cv.text(cv.width - pad, 18, title, size=12, anchor="end")
    return cv.render()

"""Minimal static SVG charts (bar panels and line panels), no plotting dependency."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PANEL_W = 260
PANEL_H = 180
MARGIN = 36
COLORS = ("#3b6ea8", "#c8553d", "#5a9e5a", "#8e6bb0")


@dataclass
class BarPanel:
    title: str
    x: Sequence[float]
    heights: Sequence[float]
    errors: Sequence[float] | None = None
    frames: Sequence[float] | None = None  # model values drawn as outlines
    signed: bool = False


@dataclass
class LinePanel:
    title: str
    x: Sequence[float]
    series: dict[str, Sequence[float]] = field(default_factory=dict)
    dashed: tuple[str, ...] = ()


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axes(x0, y0, w, h, title, ymin, ymax):
    out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#999"/>',
           f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle" font-size="12">{escape(title)}</text>',
           f'<text x="{x0 - 4}" y="{y0 + 4}" text-anchor="end" font-size="9">{ymax:.3g}</text>',
           f'<text x="{x0 - 4}" y="{y0 + h}" text-anchor="end" font-size="9">{ymin:.3g}</text>']
    return out


def _bar_panel(p: BarPanel, x0: float, y0: float) -> list[str]:
    w, h = PANEL_W - 2 * MARGIN, PANEL_H - 2 * MARGIN
    frames = [] if p.frames is None else list(p.frames)
    vals = list(p.heights) + frames + [0.0]
    if p.errors is not None:
        vals += [a + b for a, b in zip(p.heights, p.errors)] + [a - b for a, b in zip(p.heights, p.errors)]
    ymax = max(vals) if max(vals) > 0 else 1.0
    ymin = min(vals) if p.signed else 0.0
    if ymax == ymin:
        ymax = ymin + 1.0
    xs = list(p.x)
    lo, hi = (min(xs) - 1, max(xs) + 1) if xs else (-1, 1)
    sx = lambda v: x0 + (v - lo) / (hi - lo) * w  # noqa: E731
    sy = lambda v: y0 + h - (v - ymin) / (ymax - ymin) * h  # noqa: E731
    bw = max(w / max(hi - lo, 1) * 0.8, 1.0)
    out = _axes(x0, y0, w, h, p.title, ymin, ymax)
    for i, (xv, hv) in enumerate(zip(xs, p.heights)):
        top, base = sy(max(hv, 0.0)), sy(min(hv, 0.0))
        out.append(f'<rect x="{_fmt(sx(xv) - bw / 2)}" y="{_fmt(min(top, base))}" width="{_fmt(bw)}" '
                   f'height="{_fmt(abs(base - top))}" fill="{COLORS[0]}"/>')
        if p.errors is not None:
            e = p.errors[i]
            out.append(f'<line x1="{_fmt(sx(xv))}" x2="{_fmt(sx(xv))}" y1="{_fmt(sy(hv - e))}" '
                       f'y2="{_fmt(sy(hv + e))}" stroke="#222"/>')
        out.append(f'<text x="{_fmt(sx(xv))}" y="{y0 + h + 12}" text-anchor="middle" font-size="9">{int(xv)}</text>')
    for xv, fv in zip(xs, frames):
        out.append(f'<rect x="{_fmt(sx(xv) - bw / 2)}" y="{_fmt(sy(fv))}" width="{_fmt(bw)}" '
                   f'height="{_fmt(sy(0.0) - sy(fv))}" fill="none" stroke="{COLORS[1]}" stroke-width="1.5"/>')
    return out


def _line_panel(p: LinePanel, x0: float, y0: float) -> list[str]:
    w, h = PANEL_W - 2 * MARGIN, PANEL_H - 2 * MARGIN
    allv = [v for s in p.series.values() for v in s] or [0.0, 1.0]
    ymin, ymax = 0.0, max(max(allv), 1e-12)
    xs = list(p.x)
    lo, hi = (min(xs), max(xs)) if len(xs) > 1 else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1
    sx = lambda v: x0 + (v - lo) / (hi - lo) * w  # noqa: E731
    sy = lambda v: y0 + h - (v - ymin) / (ymax - ymin) * h  # noqa: E731
    out = _axes(x0, y0, w, h, p.title, ymin, ymax)
    out.append(f'<text x="{x0}" y="{y0 + h + 12}" font-size="9">{lo:.3g}</text>')
    out.append(f'<text x="{x0 + w}" y="{y0 + h + 12}" text-anchor="end" font-size="9">{hi:.3g}</text>')
    for k, (name, ys) in enumerate(p.series.items()):
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(xs, ys))
        dash = ' stroke-dasharray="4,3"' if name in p.dashed else ""
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{x0 + w - 2}" y="{y0 + 12 + 11 * k}" text-anchor="end" font-size="9" '
                   f'fill="{color}">{escape(name)}</text>')
    return out


def render(panels: Sequence[BarPanel | LinePanel], columns: int = 3) -> str:
    """Lay panels out on a grid and return the SVG document."""
    columns = max(1, min(columns, len(panels) or 1))
    rows = (len(panels) + columns - 1) // columns
    width, height = columns * PANEL_W, max(rows, 1) * PANEL_H
    body = []
    for i, panel in enumerate(panels):
        x0 = (i % columns) * PANEL_W + MARGIN
        y0 = (i // columns) * PANEL_H + MARGIN
        if isinstance(panel, BarPanel):
            body += _bar_panel(panel, x0, y0)
        else:
            body += _line_panel(panel, x0, y0)
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"

"""Minimal self-contained SVG line charts."""

from __future__ import annotations

from dataclasses import dataclass
from html import escape
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Panel:
    title: str
    series: tuple
    xlabel: str = ""
    ylabel: str = ""


def _bounds(values) -> tuple[float, float]:
    vals = [v for v in values if np.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return float(lo), float(hi)


def _panel(p: Panel, top: float, width: float, height: float) -> list[str]:
    left, right, pad_t, pad_b = 60.0, 130.0, 24.0, 32.0
    x0, x1 = left, width - right
    y0, y1 = top + pad_t, top + height - pad_b
    xs = [float(v) for s in p.series for v in np.asarray(s.x).ravel()]
    ys = [float(v) for s in p.series for v in np.asarray(s.y).ravel()]
    xlo, xhi = _bounds(xs)
    ylo, yhi = _bounds(ys)

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(v):
        return y1 - (v - ylo) / (yhi - ylo) * (y1 - y0)

    out = [
        f'<text x="{x0:.2f}" y="{top + 16:.2f}" font-size="13">{escape(p.title)}</text>',
        f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
        'fill="none" stroke="#999"/>',
        f'<text x="{x0 - 4:.2f}" y="{y0 + 4:.2f}" font-size="10" text-anchor="end">{yhi:.3g}</text>',
        f'<text x="{x0 - 4:.2f}" y="{y1:.2f}" font-size="10" text-anchor="end">{ylo:.3g}</text>',
        f'<text x="{x0:.2f}" y="{y1 + 14:.2f}" font-size="10">{xlo:.3g}</text>',
        f'<text x="{x1:.2f}" y="{y1 + 14:.2f}" font-size="10" text-anchor="end">{xhi:.3g}</text>',
    ]
    if p.xlabel:
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{y1 + 26:.2f}" font-size="11" '
                   f'text-anchor="middle">{escape(p.xlabel)}</text>')
    if p.ylabel:
        out.append(f'<text x="12" y="{(y0 + y1) / 2:.2f}" font-size="11">{escape(p.ylabel)}</text>')
    for k, s in enumerate(p.series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(
            f"{sx(float(a)):.2f},{sy(float(b)):.2f}"
            for a, b in zip(np.asarray(s.x).ravel(), np.asarray(s.y).ravel())
            if np.isfinite(a) and np.isfinite(b)
        )
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                   f'points="{pts}"><title>{escape(s.label)}</title></polyline>')
        ly = y0 + 12 + 14 * k
        out.append(f'<text x="{x1 + 8:.2f}" y="{ly:.2f}" font-size="11" fill="{color}">'
                   f'{escape(s.label)}</text>')
    return out


def render(panels, title: str = "", width: float = 720.0, panel_height: float = 240.0) -> str:
    """Stack ``panels`` vertically into one SVG document (one polyline per series)."""
    panels = list(panels)
    head = 28.0 if title else 0.0
    height = head + panel_height * len(panels)
    body = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    if title:
        body.append(f'<text x="{width / 2:.2f}" y="18" font-size="15" '
                    f'text-anchor="middle">{escape(title)}</text>')
    for i, p in enumerate(panels):
        body.extend(_panel(p, head + i * panel_height, width, panel_height))
    body.append("</svg>")
    return "\n".join(body) + "\n"


def write(path, panels, title: str = "", **kw) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(panels, title, **kw), encoding="utf-8")
    return path

"""Hand-written SVG line plots of experiment reports.

Output is a pure function of the report values: fixed canvas, fixed number
formatting, no timestamps.
"""
from __future__ import annotations

import math

import numpy as np

from .observables import ExperimentReport

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 40
PANEL_GAP = 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _panel(y0: float, height: float, times: np.ndarray, values: np.ndarray, title: str,
           x_range: tuple[float, float]) -> list[str]:
    x_lo, x_hi = x_range
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    parts = [
        f'<rect x="{MARGIN_L}" y="{_fmt(y0)}" width="{plot_w}" height="{_fmt(height)}" '
        f'fill="none" stroke="black" stroke-width="1"/>',
        f'<text x="{MARGIN_L}" y="{_fmt(y0 - 8)}" font-size="12" font-family="sans-serif">{title}</text>',
    ]
    # log-x decade ticks
    for dec in range(math.floor(x_lo), math.ceil(x_hi) + 1):
        if x_lo <= dec <= x_hi:
            px = MARGIN_L + (dec - x_lo) / (x_hi - x_lo) * plot_w
            parts.append(f'<line x1="{_fmt(px)}" y1="{_fmt(y0 + height)}" x2="{_fmt(px)}" '
                         f'y2="{_fmt(y0 + height + 5)}" stroke="black"/>')
            parts.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + height + 18)}" font-size="10" '
                         f'text-anchor="middle" font-family="sans-serif">1e{dec}</text>')
    if values.size == 0:
        return parts
    y_lo, y_hi = float(values.min()), float(values.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    for val, py in ((y_hi, y0), (y_lo, y0 + height)):
        parts.append(f'<text x="{MARGIN_L - 5}" y="{_fmt(py + 4)}" font-size="10" '
                     f'text-anchor="end" font-family="sans-serif">{val:.3g}</text>')
    lx = np.log10(times)
    px = MARGIN_L + (lx - x_lo) / (x_hi - x_lo) * plot_w
    py = y0 + height - (values - y_lo) / (y_hi - y_lo) * height
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e99" stroke-width="1.5"/>')
    return parts


def report_svg(report: ExperimentReport) -> str:
    """Two stacked log-x panels: integrand on top, cumulative integral below."""
    t = np.asarray(report.times, dtype=float)
    if t.size:
        if np.any(t <= 0):
            raise ValueError("log-x plot needs positive times")
        x_lo, x_hi = float(np.log10(t.min())), float(np.log10(t.max()))
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    else:
        x_lo, x_hi = 0.0, 1.0
    panel_h = (HEIGHT - MARGIN_T - MARGIN_B - PANEL_GAP) / 2.0
    top = MARGIN_T
    bottom = MARGIN_T + panel_h + PANEL_GAP
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    body += _panel(top, panel_h, t, np.asarray(report.integrand, float), "integrand", (x_lo, x_hi))
    body += _panel(bottom, panel_h, t, np.asarray(report.cumulative, float), "cumulative", (x_lo, x_hi))
    body.append(f'<text x="{WIDTH / 2:.2f}" y="{HEIGHT - 5}" font-size="11" text-anchor="middle" '
                f'font-family="sans-serif">t (log scale)</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def polyline_values(svg: str) -> list[list[tuple[float, float]]]:
    """Points of every polyline in an SVG produced by :func:`report_svg`."""
    out = []
    marker = 'points="'
    start = 0
    while True:
        i = svg.find(marker, start)
        if i < 0:
            return out
        j = svg.index('"', i + len(marker))
        pts = []
        for pair in svg[i + len(marker):j].split():
            a, b = pair.split(",")
            pts.append((float(a), float(b)))
        out.append(pts)
        start = j

"""Minimal SVG line charts: dependency-free, deterministic, diffable text.

Only what the CLI needs: single panels with axes, ticks and a legend, and a
three-panel row for ring-down comparisons. Coordinates are formatted with
fixed precision so identical data produce identical files.
"""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN_LEFT = 62.0
_MARGIN_RIGHT = 16.0
_MARGIN_TOP = 34.0
_MARGIN_BOTTOM = 46.0


class PlotError(ValueError):
    """Plot data contained NaN/Inf or was otherwise unusable."""


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _tick_label(value: float) -> str:
    if value == 0:
        return "0"
    magnitude = abs(value)
    if magnitude >= 1e4 or magnitude < 1e-3:
        return f"{value:.2e}"
    return f"{value:.4g}"


def _check_series(series):
    cleaned = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size == 0 or x.shape != y.shape:
            raise PlotError(f"series {label!r} must have matching non-empty x/y")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise PlotError(f"series {label!r} contains NaN or Inf")
        cleaned.append((str(label), x, y))
    if not cleaned:
        raise PlotError("no series to plot")
    return cleaned


def _limits(values):
    lo = min(float(np.min(v)) for v in values)
    hi = max(float(np.max(v)) for v in values)
    if hi == lo:
        pad = 1.0 if hi == 0.0 else abs(hi) * 0.05
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _panel(series, x0, y0, panel_w, panel_h, title, x_label, y_label):
    series = _check_series(series)
    x_lo, x_hi = _limits([x for _, x, _ in series])
    y_lo, y_hi = _limits([y for _, _, y in series])
    plot_w = panel_w - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = panel_h - _MARGIN_TOP - _MARGIN_BOTTOM
    ax = x0 + _MARGIN_LEFT
    ay = y0 + _MARGIN_TOP

    def sx(v):
        return ax + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return ay + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<rect x="{_fmt(ax)}" y="{_fmt(ay)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#444" stroke-width="1"/>'
    ]
    if title:
        parts.append(
            f'<text x="{_fmt(x0 + panel_w / 2)}" y="{_fmt(y0 + 20)}" '
            f'text-anchor="middle" font-size="13" font-family="sans-serif">'
            f"{title}</text>"
        )
    for i in range(5):
        frac = i / 4
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        xt = sx(xv)
        yt = sy(yv)
        parts.append(
            f'<line x1="{_fmt(xt)}" y1="{_fmt(ay + plot_h)}" x2="{_fmt(xt)}" '
            f'y2="{_fmt(ay + plot_h + 4)}" stroke="#444" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(xt)}" y="{_fmt(ay + plot_h + 17)}" '
            f'text-anchor="middle" font-size="10" font-family="sans-serif">'
            f"{_tick_label(xv)}</text>"
        )
        parts.append(
            f'<line x1="{_fmt(ax - 4)}" y1="{_fmt(yt)}" x2="{_fmt(ax)}" '
            f'y2="{_fmt(yt)}" stroke="#444" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(ax - 7)}" y="{_fmt(yt + 3)}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{_tick_label(yv)}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{_fmt(ax + plot_w / 2)}" y="{_fmt(ay + plot_h + 36)}" '
            f'text-anchor="middle" font-size="11" font-family="sans-serif">'
            f"{x_label}</text>"
        )
    if y_label:
        cx, cy = x0 + 14, ay + plot_h / 2
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif" '
            f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{y_label}</text>'
        )
    for k, (label, x, y) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(u))},{_fmt(sy(v))}" for u, v in zip(x, y))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{points}"/>'
        )
        if len(series) > 1:
            ly = ay + 14 + 14 * k
            lx = ax + plot_w - 8
            parts.append(
                f'<line x1="{_fmt(lx - 26)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx - 8)}" '
                f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{_fmt(lx - 30)}" y="{_fmt(ly)}" text-anchor="end" '
                f'font-size="10" font-family="sans-serif">{label}</text>'
            )
    return "".join(parts)


def line_chart(
    series,
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    width: int = 640,
    height: int = 420,
) -> str:
    """Render one panel of line series: [(label, x, y), ...] -> SVG text."""
    body = _panel(series, 0.0, 0.0, float(width), float(height), title, x_label, y_label)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>{body}</svg>\n'
    )


def triptych(
    panels,
    *,
    x_label: str = "",
    y_label: str = "",
    panel_width: int = 360,
    height: int = 360,
) -> str:
    """Three (or more) titled panels side by side: [(title, series), ...]."""
    if not panels:
        raise PlotError("no panels to plot")
    width = panel_width * len(panels)
    parts = []
    for i, (title, series) in enumerate(panels):
        parts.append(
            _panel(
                series,
                i * float(panel_width),
                0.0,
                float(panel_width),
                float(height),
                title,
                x_label,
                y_label if i == 0 else "",
            )
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'{"".join(parts)}</svg>\n'
    )

"""CSV tables and standalone SVG figures for entropy maps and compression sweeps."""
from __future__ import annotations

import csv
import io
from html import escape

import numpy as np

from .encoding import _atomic_write

__all__ = [
    "grid_csv",
    "rows_csv",
    "heatmap_svg",
    "line_chart_svg",
    "write_text",
    "TRAIN_COLUMNS",
    "COMPRESSION_COLUMNS",
]

TRAIN_COLUMNS = ("sweep", "train_loss", "train_accuracy", "val_accuracy", "wall_time_s")
COMPRESSION_COLUMNS = (
    "eps", "params_before", "params_after", "ratio",
    "accuracy_before", "accuracy_after", "accuracy_delta", "discarded_total", "distortion_bound",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def grid_csv(values) -> str:
    """Header ``c0,c1,...`` followed by one row per image row."""
    values = np.asarray(values, dtype=np.float64)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"c{j}" for j in range(values.shape[1])])
    for row in values:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def rows_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    _atomic_write(path, text.encode())


def _color(t: float) -> str:
    # dark blue through teal to yellow
    stops = np.array([[68, 1, 84], [33, 145, 140], [253, 231, 37]], dtype=float)
    t = min(max(t, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    c = stops[i] + (t - i) * (stops[i + 1] - stops[i])
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def heatmap_svg(values, title: str = "", unit: str = "nats", cell: int = 16) -> str:
    """One rectangle per grid entry on a linear color scale from 0 to the maximum."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    vmax = float(values.max()) if values.size and values.max() > 0 else 1.0
    pad, bar = 30, 14
    width = w * cell + 2 * pad + 70
    height = h * cell + 2 * pad
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{pad}" y="{pad - 10}">{escape(title)}</text>',
    ]
    for i in range(h):
        for j in range(w):
            v = values[i, j]
            out.append(
                f'<rect x="{pad + j * cell}" y="{pad + i * cell}" width="{cell}" height="{cell}" '
                f'fill="{_color(v / vmax)}"><title>({i},{j}) {v:.6g}</title></rect>'
            )
    x0 = pad + w * cell + 12
    steps = 32
    for s in range(steps):
        t = 1.0 - s / (steps - 1)
        y = pad + s * (h * cell) / steps
        out.append(f'<rect x="{x0}" y="{y:.2f}" width="{bar}" height="{h * cell / steps + 0.5:.2f}" fill="{_color(t)}"/>')
    out.append(f'<text x="{x0 + bar + 4}" y="{pad + 8}">{vmax:.3g}</text>')
    out.append(f'<text x="{x0 + bar + 4}" y="{pad + h * cell}">0</text>')
    out.append(f'<text x="{x0}" y="{pad + h * cell + 16}">{escape(unit)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart_svg(x, series: dict, title: str = "", xlabel: str = "", log_x: bool = False) -> str:
    """Each series is drawn on its own vertical scale, normalized to its min/max.

    Axis labels give every series' range, so charts with different units
    (parameter counts and accuracies) can share one plot.
    """
    x = np.asarray(x, dtype=np.float64)
    width, height, pad = 520, 320, 50
    if log_x:
        xs = np.log10(np.where(x > 0, x, np.nan))
        floor = np.nanmin(xs) - 1 if np.any(np.isfinite(xs)) else 0.0
        xs = np.where(np.isfinite(xs), xs, floor)
    else:
        xs = x
    lo, hi = float(np.min(xs)), float(np.max(xs))
    span = hi - lo if hi > lo else 1.0

    def px(v):
        return pad + (v - lo) / span * (width - 2 * pad)

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{pad}" y="20">{escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>',
    ]
    for v, xv in zip(xs, x):
        out.append(f'<text x="{px(v):.1f}" y="{height - pad + 14}" text-anchor="middle" font-size="9">{xv:.0e}</text>')
    for n, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=np.float64)
        ylo, yhi = float(np.min(ys)), float(np.max(ys))
        yspan = yhi - ylo if yhi > ylo else 1.0
        color = palette[n % len(palette)]
        pts = " ".join(
            f"{px(a):.1f},{height - pad - (b - ylo) / yspan * (height - 2 * pad):.1f}" for a, b in zip(xs, ys)
        )
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(
            f'<text x="{width - pad}" y="{pad + 14 * n}" text-anchor="end" fill="{color}">'
            f"{escape(name)} [{ylo:.4g}, {yhi:.4g}]</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"

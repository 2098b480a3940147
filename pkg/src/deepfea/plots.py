"""Self-contained SVG emission: line charts and field heatmaps.

Hand-written SVG keeps plotting dependency-free; output targets quick visual
inspection, not publication styling.
"""

from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_chart(series, title: str, xlabel: str, ylabel: str,
               width: int = 640, height: int = 420) -> str:
    """series: list of (label, xs, ys). Returns an SVG document string."""
    ml, mr, mt, mb = 70, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-size="14">{title}</text>']
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                 'fill="none" stroke="black"/>')
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        parts.append(f'<line x1="{px(fx):.1f}" y1="{mt + ph}" x2="{px(fx):.1f}" '
                     f'y2="{mt + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(fx):.1f}" y="{mt + ph + 18}" '
                     f'text-anchor="middle">{_fmt(fx)}</text>')
        parts.append(f'<line x1="{ml - 4}" y1="{py(fy):.1f}" x2="{ml}" '
                     f'y2="{py(fy):.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{py(fy) + 4:.1f}" '
                     f'text-anchor="end">{_fmt(fy)}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 8}" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        dash = "" if i % 2 == 0 else ' stroke-dasharray="6 4"'
        pts = " ".join(f"{px(float(x)):.1f},{py(float(y)):.1f}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(f'<text x="{ml + 8}" y="{mt + 16 + 16 * i}" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _colormap(v: float) -> str:
    """0..1 -> blue..white..red hex color."""
    v = min(max(v, 0.0), 1.0)
    if v < 0.5:
        t = v / 0.5
        r, g, b = int(59 + t * 196), int(76 + t * 179), 255
    else:
        t = (v - 0.5) / 0.5
        r, g, b = 255, int(255 - t * 179), int(255 - t * 195)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(field: np.ndarray, title: str, cell: int = 36) -> str:
    """Grid field (row 0 drawn at the bottom) as colored cells."""
    field = np.asarray(field, dtype=float)
    rows, cols = field.shape
    lo, hi = float(field.min()), float(field.max())
    span = hi - lo if hi > lo else 1.0
    ml, mt, mb = 20, 40, 30
    width = ml + cols * cell + 20
    height = mt + rows * cell + mb
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-size="14">{title}</text>']
    for i in range(rows):
        for j in range(cols):
            color = _colormap((field[i, j] - lo) / span)
            x = ml + j * cell
            y = mt + (rows - 1 - i) * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" '
                         f'height="{cell}" fill="{color}" stroke="#ccc"/>')
    parts.append(f'<text x="{ml}" y="{height - 10}">min {_fmt(lo)}  '
                 f'max {_fmt(hi)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

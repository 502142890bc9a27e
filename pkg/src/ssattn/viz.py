"""Dependency-free SVG output: line plots for sweeps, token heatmaps for
per-sentence importance reports.

Heatmap color ramp is linear from white #FFFFFF at 0 to #1F77B4 at the row
maximum. All numbers are formatted with fixed precision so identical inputs
produce identical bytes.
"""

from __future__ import annotations

import numpy as np

RAMP_LOW = (255, 255, 255)   # #FFFFFF
RAMP_HIGH = (31, 119, 180)   # #1F77B4

PALETTE = ["#1F77B4", "#FF7F0E", "#2CA02C", "#D62728", "#9467BD", "#8C564B"]


def _esc(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def ramp_color(t: float) -> str:
    """0 -> white, 1 -> saturated blue, linear in RGB."""
    t = min(max(float(t), 0.0), 1.0)
    r = round(RAMP_LOW[0] + t * (RAMP_HIGH[0] - RAMP_LOW[0]))
    g = round(RAMP_LOW[1] + t * (RAMP_HIGH[1] - RAMP_LOW[1]))
    b = round(RAMP_LOW[2] + t * (RAMP_HIGH[2] - RAMP_LOW[2]))
    return f"#{r:02X}{g:02X}{b:02X}"


def svg_line_plot(series: dict, title: str = "", xlabel: str = "",
                  ylabel: str = "") -> str:
    """One polyline per entry of ``series`` (name -> list of (x, y) pairs)."""
    if not series or all(not pts for pts in series.values()):
        raise ValueError("nothing to plot")
    width, height = 640, 400
    ml, mr, mt, mb = 64, 24, 36, 52
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = 0.05 * (y_hi - y_lo) or 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-size="14">{_esc(title)}</text>')
    # axes
    out.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
               'stroke="black"/>')
    out.append(f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
               f'y2="{height - mb}" stroke="black"/>')
    x_ticks = sorted(set(xs)) if len(set(xs)) <= 8 else list(np.linspace(x_lo, x_hi, 5))
    for xv in x_ticks:
        X = px(xv)
        out.append(f'<line x1="{X:.1f}" y1="{height - mb}" x2="{X:.1f}" '
                   f'y2="{height - mb + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{height - mb + 18}" '
                   f'text-anchor="middle">{xv:g}</text>')
    for yv in np.linspace(y_lo, y_hi, 5):
        Y = py(yv)
        out.append(f'<line x1="{ml - 5}" y1="{Y:.1f}" x2="{ml}" y2="{Y:.1f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{Y + 4:.1f}" '
                   f'text-anchor="end">{yv:.3f}</text>')
    if xlabel:
        out.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" '
                   f'text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})">'
                   f'{_esc(ylabel)}</text>')

    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="2" data-series="{_esc(name)}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" '
                       f'fill="{color}"/>')
        out.append(f'<text x="{width - mr - 8}" y="{mt + 16 * i + 4}" '
                   f'text-anchor="end" fill="{color}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_token_heatmap(tokens, rows: dict, title: str = "") -> str:
    """Grid of colored cells: one column per token, one row per named weight
    vector (attention received, importance probability, pooling weight...).
    Each row is shaded relative to its own maximum."""
    names = list(rows)
    if not names:
        raise ValueError("no rows to draw")
    n = len(tokens)
    for name in names:
        if len(rows[name]) != n:
            raise ValueError(f"row {name!r} length {len(rows[name])} != {n} tokens")
    cell_w, cell_h = 66, 26
    label_w = 150
    top = 58
    width = label_w + n * cell_w + 16
    height = top + len(names) * cell_h + 16
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{label_w}" y="18" font-size="13">{_esc(title)}</text>')
    for j, tok in enumerate(tokens):
        x = label_w + j * cell_w + cell_w / 2
        shown = tok if len(tok) <= 9 else tok[:8] + "…"
        out.append(f'<text x="{x:.1f}" y="{top - 8}" text-anchor="middle">'
                   f'{_esc(shown)}</text>')
    for i, name in enumerate(names):
        vals = np.asarray(rows[name], dtype=np.float64)
        vmax = float(vals.max())
        y = top + i * cell_h
        out.append(f'<text x="{label_w - 8}" y="{y + cell_h / 2 + 4:.1f}" '
                   f'text-anchor="end">{_esc(name)}</text>')
        for j, v in enumerate(vals):
            x = label_w + j * cell_w
            t = 0.0 if vmax <= 0 else float(v) / vmax
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                       f'fill="{ramp_color(t)}" stroke="#CCCCCC"/>')
            out.append(f'<text x="{x + cell_w / 2:.1f}" y="{y + cell_h / 2 + 4:.1f}" '
                       f'text-anchor="middle">{v:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Deterministic SVG scatter plots coloured by categorical label."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError

# fixed 12-colour categorical cycle
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a",
)


def color_map(labels) -> dict:
    return {lab: PALETTE[k % len(PALETTE)] for k, lab in enumerate(sorted(set(labels)))}


def _f(v: float) -> str:
    return f"{v:.2f}"


def _bounds(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span == 0:
        span = 1.0 if lo == 0 else abs(lo)
        lo, hi = lo - span / 2, hi + span / 2
    margin = 0.05 * (hi - lo)
    return lo - margin, hi + margin


def scatter_group(coords, labels, colors, x0, y0, width, height, radius=3.0, title=None) -> list:
    """SVG fragments for one framed scatter panel at (x0, y0)."""
    coords = np.asarray(coords, dtype=np.float64)
    xlo, xhi = _bounds(coords[:, 0])
    ylo, yhi = _bounds(coords[:, 1])
    parts = [f'<g transform="translate({_f(x0)},{_f(y0)})">',
             f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="none" stroke="#444" stroke-width="1"/>']
    if title:
        parts.append(f'<text x="{_f(width / 2)}" y="-6" font-size="12" text-anchor="middle">{escape(str(title))}</text>')
    for (x, y), lab in zip(coords.tolist(), labels):
        px = (x - xlo) / (xhi - xlo) * width
        py = height - (y - ylo) / (yhi - ylo) * height
        parts.append(f'<circle cx="{_f(px)}" cy="{_f(py)}" r="{_f(radius)}" fill="{colors[lab]}" fill-opacity="0.8"/>')
    parts.append("</g>")
    return parts


def legend_group(colors, x0, y0) -> list:
    parts = [f'<g class="legend" transform="translate({_f(x0)},{_f(y0)})">']
    for k, (lab, col) in enumerate(colors.items()):
        y = 18 * k
        parts.append(f'<g class="legend-entry"><rect x="0" y="{_f(y)}" width="10" height="10" fill="{col}"/>'
                     f'<text x="16" y="{_f(y + 9)}" font-size="11">{escape(str(lab))}</text></g>')
    parts.append("</g>")
    return parts


def _document(width, height, body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
            f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def scatter_svg(coords, labels, title=None, size=480.0) -> str:
    """One circle per point, legend keyed by sorted label order."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = [str(x) for x in labels]
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValidationError("coordinates must be an M x 2 array")
    if not labels:
        raise ValidationError("empty label set")
    if len(labels) != coords.shape[0]:
        raise ValidationError(f"{len(labels)} labels for {coords.shape[0]} points")
    colors = color_map(labels)
    pad = 30.0
    legend_w = 20.0 + 7.0 * max(len(s) for s in colors)
    body = scatter_group(coords, labels, colors, pad, pad, size, size, title=title)
    body += legend_group(colors, 2 * pad + size, pad)
    return _document(3 * pad + size + legend_w, 2 * pad + size, body)


def panel_svg(cells, row_titles, col_titles, tile=200.0) -> str:
    """Grid of scatter tiles.

    ``cells[r][c]`` is ``(coords, labels)`` or ``None`` for a failed run,
    which is drawn as an empty frame marked "failed".
    """
    n_rows, n_cols = len(row_titles), len(col_titles)
    all_labels = [lab for row in cells for cell in row if cell is not None for lab in cell[1]]
    if not all_labels:
        raise ValidationError("empty label set")
    colors = color_map([str(x) for x in all_labels])
    gap, left, top = 24.0, 70.0, 40.0
    body = []
    for c, name in enumerate(col_titles):
        x = left + c * (tile + gap) + tile / 2
        body.append(f'<text x="{_f(x)}" y="{_f(top - 20)}" font-size="13" text-anchor="middle">{escape(str(name))}</text>')
    for r, name in enumerate(row_titles):
        y = top + r * (tile + gap) + tile / 2
        body.append(f'<text x="{_f(left - 10)}" y="{_f(y)}" font-size="13" text-anchor="end">{escape(str(name))}</text>')
        for c in range(n_cols):
            x0, y0 = left + c * (tile + gap), top + r * (tile + gap)
            cell = cells[r][c]
            if cell is None:
                body.append(f'<g transform="translate({_f(x0)},{_f(y0)})"><rect x="0" y="0" width="{_f(tile)}" '
                            f'height="{_f(tile)}" fill="#eee" stroke="#444"/><text x="{_f(tile / 2)}" '
                            f'y="{_f(tile / 2)}" font-size="12" text-anchor="middle">failed</text></g>')
            else:
                body += scatter_group(cell[0], [str(x) for x in cell[1]], colors, x0, y0, tile, tile, radius=2.0)
    width = left + n_cols * (tile + gap)
    body += legend_group(colors, width, top)
    legend_w = 20.0 + 7.0 * max(len(s) for s in colors)
    return _document(width + legend_w + gap, top + n_rows * (tile + gap), body)


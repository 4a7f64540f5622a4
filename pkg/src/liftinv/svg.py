"""SVG rendering of membership rasters.

The renderer reads only the raster CSV, so turning SVG output off cannot
change any other artifact.
"""

from __future__ import annotations

import csv
import io

import numpy as np

# later layers are drawn on top
LAYERS = (("in_X", "#d9d9d9", "X"),
          ("inside", "#6fa8dc", "preimage"),
          ("inside_robust", "#1c4587", "robust preimage"))


def _runs(mask_row: np.ndarray):
    """Maximal runs of True as ``(start, length)``."""
    padded = np.concatenate([[False], mask_row, [False]]).astype(int)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return zip(starts, ends - starts)


def raster_to_svg(csv_text: str, size: int = 480, title: str = "") -> str:
    """Render a ``x1,x2,<flag columns>`` raster as an SVG string."""
    reader = csv.DictReader(io.StringIO(csv_text))
    cols = reader.fieldnames or []
    xname, yname = cols[0], cols[1]
    rows = list(reader)
    xs = np.array([float(r[xname]) for r in rows])
    ys = np.array([float(r[yname]) for r in rows])
    ux, uy = np.unique(xs), np.unique(ys)
    ix = np.searchsorted(ux, xs)
    iy = np.searchsorted(uy, ys)
    nx, ny = len(ux), len(uy)
    margin = 50
    cw = size / max(nx, 1)
    ch = size / max(ny, 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * margin}" '
           f'height="{size + 2 * margin + 20}" font-family="sans-serif" font-size="12">',
           f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" '
           'fill="white" stroke="black"/>']
    if title:
        out.append(f'<text x="{margin}" y="{margin - 20}">{title}</text>')
    for key, color, _ in LAYERS:
        if key not in cols:
            continue
        grid = np.zeros((ny, nx), dtype=bool)
        flags = np.array([r[key] in ("1", "True", "true") for r in rows])
        grid[iy[flags], ix[flags]] = True
        for j in range(ny):
            y = margin + size - (j + 1) * ch
            for start, length in _runs(grid[j]):
                out.append(f'<rect x="{margin + start * cw:.2f}" y="{y:.2f}" '
                           f'width="{length * cw:.2f}" height="{ch:.2f}" fill="{color}"/>')
    if nx and ny:
        out.append(f'<text x="{margin}" y="{margin + size + 15}">{ux[0]:.3g}</text>')
        out.append(f'<text x="{margin + size}" y="{margin + size + 15}" '
                   f'text-anchor="end">{ux[-1]:.3g}</text>')
        out.append(f'<text x="{margin - 5}" y="{margin + size}" '
                   f'text-anchor="end">{uy[0]:.3g}</text>')
        out.append(f'<text x="{margin - 5}" y="{margin + 10}" '
                   f'text-anchor="end">{uy[-1]:.3g}</text>')
        out.append(f'<text x="{margin + size / 2}" y="{margin + size + 30}" '
                   f'text-anchor="middle">{xname}</text>')
        out.append(f'<text x="{margin - 35}" y="{margin + size / 2}" '
                   f'text-anchor="middle">{yname}</text>')
    lx = margin
    for key, color, label in LAYERS:
        if key in cols:
            out.append(f'<rect x="{lx}" y="{margin + size + 40}" width="12" height="12" '
                       f'fill="{color}"/>')
            out.append(f'<text x="{lx + 16}" y="{margin + size + 51}">{label}</text>')
            lx += 130
    out.append("</svg>")
    return "\n".join(out) + "\n"

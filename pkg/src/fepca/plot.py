"""Static SVG factor maps with confidence ellipses."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .dataio import ResultBundle
from .geometry import ConfidenceEllipsoid, ellipse_outline

OUTLINE_POINTS = 128
MARGIN = 50


def _num(v: float) -> str:
    return f"{v:.3f}"


def render_svg(bundle: ResultBundle, dims=(1, 2), size: int = 600, labels: bool = True,
               side: str = "row") -> str:
    """Factor map of the reference scores on ``dims`` with one ellipse per point."""
    dims = [int(d) for d in dims]
    if len(dims) != 2 or any(d < 1 or d > bundle.rank for d in dims) or dims[0] == dims[1]:
        raise ValueError(f"dims must be two distinct components within 1..{bundle.rank}")
    idx = [d - 1 for d in dims]
    if side == "row":
        points = np.asarray(bundle.scores)[:, idx]
        names = bundle.row_labels
    else:
        points = bundle.column_variable_coordinates[:, idx]
        names = bundle.col_labels
    outlines = []
    for rec in bundle.ellipsoids_for(dims, side):
        e = ConfidenceEllipsoid(np.asarray(rec.center), np.asarray(rec.cov), rec.level, rec.radius2)
        outlines.append(ellipse_outline(e, OUTLINE_POINTS))

    cloud = np.vstack([points] + outlines + [np.zeros((1, 2))])
    lo, hi = cloud.min(axis=0), cloud.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    mid = (lo + hi) / 2
    inner = size - 2 * MARGIN
    scale = inner / (1.05 * span)  # one scale for both axes

    def tx(xy):
        xy = np.atleast_2d(xy)
        x = size / 2 + (xy[:, 0] - mid[0]) * scale
        y = size / 2 - (xy[:, 1] - mid[1]) * scale
        return np.column_stack([x, y])

    explained = bundle.explained
    xlab = f"Dim {dims[0]} ({100 * explained[idx[0]]:.2f}%)"
    ylab = f"Dim {dims[1]} ({100 * explained[idx[1]]:.2f}%)"
    origin = tx([0.0, 0.0])[0]

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        '<g stroke="#999999" stroke-dasharray="4,3" stroke-width="1">',
        f'<line x1="{MARGIN}" y1="{_num(origin[1])}" x2="{size - MARGIN}" y2="{_num(origin[1])}"/>',
        f'<line x1="{_num(origin[0])}" y1="{MARGIN}" x2="{_num(origin[0])}" y2="{size - MARGIN}"/>',
        "</g>",
        f'<text x="{size / 2:.1f}" y="{size - 12}" text-anchor="middle" font-size="13">{escape(xlab)}</text>',
        f'<text x="14" y="{size / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {size / 2:.1f})">{escape(ylab)}</text>',
        '<g class="ellipses" fill="none" stroke="#1f77b4" stroke-width="1">',
    ]
    for poly in outlines:
        pts = tx(poly)
        d = "M " + " L ".join(f"{_num(x)} {_num(y)}" for x, y in pts) + " Z"
        out.append(f'<path d="{d}"/>')
    out.append("</g>")
    out.append('<g class="points" fill="#d62728" font-size="11">')
    for name, (x, y) in zip(names, tx(points)):
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2.5"/>')
        if labels:
            out.append(f'<text x="{_num(x + 4)}" y="{_num(y - 4)}">{escape(name)}</text>')
    out.append("</g>")
    out.append(f"<title>{escape(bundle.method)} confidence ellipses, level {bundle.level:g}</title>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


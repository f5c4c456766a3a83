"""Minimal SVG output for closed polylines."""
from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def polylines_svg(polylines, size=480, margin=0.05, stroke=1.5):
    """Return an SVG document drawing each ``(N, 2)`` array as a closed polygon outline.

    All polylines share one frame; y points up as in the math convention.
    """
    pts = [np.asarray(p, dtype=float) for p in polylines]
    if not pts:
        raise ValueError("nothing to draw")
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    scale = size * (1 - 2 * margin) / span
    off = size * margin

    def tx(p):
        x = off + (p[:, 0] - lo[0]) * scale
        y = size - off - (p[:, 1] - lo[1]) * scale
        return " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    for i, p in enumerate(pts):
        c = _COLORS[i % len(_COLORS)]
        lines.append(f'  <polygon points="{tx(p)}" fill="none" stroke="{c}" stroke-width="{stroke}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

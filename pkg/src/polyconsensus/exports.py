"""Plain-data exports: PGM rasters, SVG overlays and CSV tables."""

from __future__ import annotations

import csv
import io
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .distance import ScalarField
from .raster import RasterGrid

# fixed palette for rater outlines, indexed by rater position
RATER_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8",
)
CONSENSUS_COLOR = "#000000"
FLAG_COLOR = "#d62728"
BASE_STROKE = 0.15


def pgm_bytes(levels: np.ndarray) -> bytes:
    """Binary (P5) 8-bit PGM of a 2-D array already scaled to 0..255; row 0 is the top."""
    img = np.clip(np.rint(levels), 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    return np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def occupancy_pgm(grid: RasterGrid) -> bytes:
    return pgm_bytes(np.where(grid.cells, 255, 0))


def heatmap_pgm(field: ScalarField, threshold: float) -> bytes:
    """Linear map of field values: 0 -> 0 and ``4 * threshold`` -> 255, clamped."""
    top = 4.0 * threshold if threshold > 0 else max(float(field.values.max()), 1e-12)
    return pgm_bytes(field.values / top * 255.0)


def magnitude_pgm(field: ScalarField, limit: float) -> bytes:
    """|field| clamped at ``limit`` pixels and scaled to 0..255."""
    return pgm_bytes(np.minimum(np.abs(field.values), limit) / limit * 255.0)


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _points(pts: np.ndarray) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)


def _sigma_color(value: float, vmax: float) -> str:
    # blue -> yellow ramp; deterministic and colormap-free
    s = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    r = int(round(40 + s * 213))
    g = int(round(60 + s * 171))
    b = int(round(200 - s * 170))
    return f"#{r:02x}{g:02x}{b:02x}"


def overlay_svg(extent, rater_polygons: Sequence[np.ndarray], consensus: np.ndarray, closed: bool = True,
                sigma_points: Optional[np.ndarray] = None, sigma: Optional[np.ndarray] = None,
                vmax: Optional[float] = None, flagged: Iterable[np.ndarray] = ()) -> str:
    """SVG with rater outlines, the consensus and flagged arcs, in pixel coordinates.

    ``extent`` is ``(x_min, y_min, x_max, y_max)`` of the view box.
    """
    x0, y0, x1, y1 = extent
    sw = BASE_STROKE
    out: List[str] = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(x1 - x0)} {_fmt(y1 - y0)}" '
        f'width="{_fmt((x1 - x0) * 10)}" height="{_fmt((y1 - y0) * 10)}">',
        f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" height="{_fmt(y1 - y0)}" fill="#ffffff"/>',
        '<g id="raters" fill="none">',
    ]
    for k, poly in enumerate(rater_polygons):
        color = RATER_PALETTE[k % len(RATER_PALETTE)]
        out.append(
            f'<polygon points="{_points(poly)}" stroke="{color}" stroke-opacity="0.5" stroke-width="{_fmt(sw)}"/>'
        )
    out.append("</g>")
    tag = "polygon" if closed else "polyline"
    out.append(
        f'<{tag} id="consensus" points="{_points(consensus)}" fill="none" stroke="{CONSENSUS_COLOR}" '
        f'stroke-width="{_fmt(sw)}"/>'
    )
    if sigma is not None and sigma_points is not None and len(sigma_points) > 1:
        top = float(vmax) if vmax else float(np.max(sigma))
        out.append('<g id="sigma" fill="none">')
        n = len(sigma_points)
        stop = n if closed else n - 1
        for k in range(stop):
            a, b = sigma_points[k], sigma_points[(k + 1) % n]
            out.append(
                f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" x2="{_fmt(b[0])}" y2="{_fmt(b[1])}" '
                f'stroke="{_sigma_color(float(sigma[k]), top)}" stroke-width="{_fmt(sw)}"/>'
            )
        out.append("</g>")
    out.append('<g id="flagged" fill="none">')
    for seg in flagged:
        if len(seg) >= 2:
            out.append(
                f'<polyline points="{_points(seg)}" stroke="{FLAG_COLOR}" stroke-width="{_fmt(3 * sw)}"/>'
            )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()

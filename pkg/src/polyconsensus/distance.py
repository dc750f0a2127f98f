"""Exact Euclidean distance transforms and signed distance fields on subpixel grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidInputError, OutOfDomainError
from .geometry import Point2, Polygon, point_segment_distance
from .raster import (
    DEFAULT_PAD,
    GridSpec,
    RasterGrid,
    grid_for_bounds,
    interior_cells,
    supercover_cells,
)

_FAR = 1e300


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values at cell centers of a :class:`GridSpec` (pixels or dimensionless)."""

    spec: GridSpec
    values: np.ndarray  # float64, shape (height, width)

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise InvalidInputError(
                f"values shape {self.values.shape} does not match grid shape {self.spec.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field values must be finite")

    @property
    def resolution(self) -> int:
        return self.spec.resolution

    @property
    def origin(self):
        return (self.spec.x0, self.spec.y0)

    @property
    def width(self) -> int:
        return self.spec.width

    @property
    def height(self) -> int:
        return self.spec.height


@njit(cache=True)
def _envelope_1d(f, out, v, z):
    """Lower envelope of parabolas (Felzenszwalb & Huttenlocher) for one line.

    Entries of ``f`` equal to _FAR are treated as absent seeds, which keeps the
    intersection formula free of inf - inf.
    """
    n = f.shape[0]
    k = -1
    for q in range(n):
        if f[q] >= _FAR:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _FAR
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = d * d + f[v[k]]


@njit(cache=True)
def _squared_edt(seeds):
    h, w = seeds.shape
    g = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            g[i, j] = 0.0 if seeds[i, j] else _FAR
    n = max(h, w)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    line = np.empty(n)
    out = np.empty(n)
    for j in range(w):
        for i in range(h):
            line[i] = g[i, j]
        _envelope_1d(line[:h], out[:h], v, z)
        for i in range(h):
            g[i, j] = out[i]
    for i in range(h):
        for j in range(w):
            line[j] = g[i, j]
        _envelope_1d(line[:w], out[:w], v, z)
        for j in range(w):
            g[i, j] = out[j]
    return g


def squared_edt_cells(seeds: np.ndarray) -> np.ndarray:
    """Squared distance, in cell units, from each cell center to the nearest seed center."""
    seeds = np.ascontiguousarray(seeds, dtype=np.bool_)
    if not seeds.any():
        raise InvalidInputError("distance transform needs at least one filled cell")
    return _squared_edt(seeds)


def edt(boundary_cells: RasterGrid) -> ScalarField:
    """Exact Euclidean distance in pixels from every cell center to the nearest filled cell."""
    d2 = squared_edt_cells(boundary_cells.cells)
    return ScalarField(boundary_cells.spec, np.sqrt(d2) / boundary_cells.resolution)


def signed_distance_on(polygon: Polygon, spec: GridSpec) -> ScalarField:
    """Signed distance of ``polygon`` sampled on an existing grid (negative inside)."""
    boundary = supercover_cells(polygon, spec)
    dist = np.sqrt(squared_edt_cells(boundary)) / spec.resolution
    inside = interior_cells(polygon, spec)
    return ScalarField(spec, np.where(inside, -dist, dist))


def signed_distance_field(polygon: Polygon, resolution: int, pad: float = DEFAULT_PAD) -> ScalarField:
    spec = grid_for_bounds(polygon.bounds, resolution, pad)
    return signed_distance_on(polygon, spec)


def exact_polyline_distance(polygon: Polygon, p: Point2) -> float:
    a, b = polygon.edges
    return float(point_segment_distance(np.asarray([p], dtype=float), a, b).min())


def exact_polyline_distances(polygon: Polygon, points) -> np.ndarray:
    a, b = polygon.edges
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty(len(pts))
    # chunk to bound the (points x edges) temporary
    chunk = max(1, 2_000_000 // max(1, len(a)))
    for start in range(0, len(pts), chunk):
        out[start:start + chunk] = point_segment_distance(pts[start:start + chunk], a, b).min(axis=1)
    return out


def sample_field_many(field: ScalarField, points) -> np.ndarray:
    """Bilinear interpolation between cell centers at each of ``points`` (m, 2)."""
    spec = field.spec
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = (pts[:, 0] - spec.x0) * spec.resolution - 0.5
    v = (pts[:, 1] - spec.y0) * spec.resolution - 0.5
    w, h = spec.width, spec.height
    outside = (u < 0) | (v < 0) | (u > w - 1) | (v > h - 1) | ~np.isfinite(u) | ~np.isfinite(v)
    if np.any(outside):
        k = int(np.argmax(outside))
        raise OutOfDomainError(
            f"point ({pts[k, 0]:.4f}, {pts[k, 1]:.4f}) lies outside the field extent; increase the grid pad"
        )
    i0 = np.minimum(np.floor(u).astype(np.int64), max(w - 2, 0))
    j0 = np.minimum(np.floor(v).astype(np.int64), max(h - 2, 0))
    i1 = np.minimum(i0 + 1, w - 1)
    j1 = np.minimum(j0 + 1, h - 1)
    fu = u - i0
    fv = v - j0
    vals = field.values
    top = vals[j0, i0] * (1 - fu) + vals[j0, i1] * fu
    bottom = vals[j1, i0] * (1 - fu) + vals[j1, i1] * fu
    return top * (1 - fv) + bottom * fv


def sample_field(field: ScalarField, p: Point2) -> float:
    return float(sample_field_many(field, [p])[0])


def field_extent(field: ScalarField):
    """Pixel-space rectangle spanned by the cell centers, where sampling is defined."""
    s = field.spec
    half = 0.5 / s.resolution
    return (s.x0 + half, s.y0 + half, s.x0 + s.width / s.resolution - half, s.y0 + s.height / s.resolution - half)


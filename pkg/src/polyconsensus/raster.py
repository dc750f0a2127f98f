"""All-touch rasterization of polygons onto subpixel grids.

A grid of resolution ``r`` has ``r`` cells per image pixel. Cell ``(row, col)``
is the half-open tile ``[x0 + col/r, x0 + (col+1)/r) x [y0 + row/r, ...)`` and
its center sits half a cell inside that corner.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from .errors import InvalidInputError, ResourceLimitError
from .geometry import Polygon

DEFAULT_PAD = 4
DEFAULT_CELL_BUDGET = 10**8
CELL_BUDGET_ENV = "POLYCONSENSUS_CELL_BUDGET"

_SNAP = 1e-9


def cell_budget() -> int:
    raw = os.environ.get(CELL_BUDGET_ENV)
    if raw is None:
        return DEFAULT_CELL_BUDGET
    try:
        value = int(float(raw))
    except ValueError:
        raise InvalidInputError(f"{CELL_BUDGET_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise InvalidInputError(f"{CELL_BUDGET_ENV} must be positive, got {value}")
    return value


@dataclass(frozen=True)
class GridSpec:
    """Geometry shared by occupancy grids and scalar fields."""

    resolution: int
    x0: float
    y0: float
    width: int
    height: int

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise InvalidInputError(f"resolution must be a positive integer, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("grid must have at least one cell in each direction")
        budget = cell_budget()
        if self.width * self.height > budget:
            raise ResourceLimitError(
                f"grid of {self.width}x{self.height} cells exceeds the budget of {budget} cells"
            )

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def cell_size(self) -> float:
        return 1.0 / self.resolution

    def to_cell_units(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - np.array([self.x0, self.y0])) * self.resolution

    def cell_centers(self):
        """Pixel coordinates of cell centers as two 1-D arrays (xs over columns, ys over rows)."""
        r = self.resolution
        xs = self.x0 + (np.arange(self.width) + 0.5) / r
        ys = self.y0 + (np.arange(self.height) + 0.5) / r
        return xs, ys

    def translated(self, dx: float, dy: float) -> "GridSpec":
        return GridSpec(self.resolution, self.x0 + dx, self.y0 + dy, self.width, self.height)


def grid_for_bounds(bounds, resolution: int, pad: float = DEFAULT_PAD) -> GridSpec:
    """Pixel-aligned grid covering ``(x_min, y_min, x_max, y_max)`` plus ``pad`` pixels.

    The origin is snapped to whole pixels so that integer translations of the
    input translate the grid without changing its cell layout.
    """
    if int(resolution) != resolution or resolution < 1:
        raise InvalidInputError(f"resolution must be a positive integer, got {resolution}")
    x_min, y_min, x_max, y_max = bounds
    x0 = math.floor(x_min) - math.ceil(pad)
    y0 = math.floor(y_min) - math.ceil(pad)
    x1 = math.ceil(x_max) + math.ceil(pad)
    y1 = math.ceil(y_max) + math.ceil(pad)
    r = int(resolution)
    return GridSpec(r, float(x0), float(y0), int((x1 - x0) * r), int((y1 - y0) * r))


def grid_for_polygons(polygons: Iterable[Polygon], resolution: int, pad: float = DEFAULT_PAD) -> GridSpec:
    boxes = np.array([p.bounds for p in polygons])
    if len(boxes) == 0:
        raise InvalidInputError("need at least one polygon to size a grid")
    union = (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())
    return grid_for_bounds(union, resolution, pad)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    spec: GridSpec
    cells: np.ndarray  # bool, shape (height, width)

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

    def filled_count(self) -> int:
        return int(np.count_nonzero(self.cells))


@njit(cache=True)
def _snap(value):
    nearest = math.floor(value + 0.5)
    if abs(value - nearest) < _SNAP:
        return nearest
    return value


@njit(cache=True)
def _mark(cells, u, v):
    col = int(math.floor(_snap(u)))
    row = int(math.floor(_snap(v)))
    if 0 <= row < cells.shape[0] and 0 <= col < cells.shape[1]:
        cells[row, col] = True
        return True
    return False


@njit(cache=True)
def _supercover_kernel(au, av, bu, bv, cells):
    """Mark every half-open cell containing a point of any segment a[k]-b[k].

    Coordinates are in cell units. Returns False if a segment leaves the grid.
    """
    ok = True
    for e in range(au.shape[0]):
        u0, v0, u1, v1 = au[e], av[e], bu[e], bv[e]
        du = u1 - u0
        dv = v1 - v0
        n_u = 0
        n_v = 0
        if du != 0.0:
            n_u = int(math.ceil(max(u0, u1))) - int(math.floor(min(u0, u1))) + 1
        if dv != 0.0:
            n_v = int(math.ceil(max(v0, v1))) - int(math.floor(min(v0, v1))) + 1
        params = np.empty(n_u + n_v + 2)
        m = 0
        params[m] = 0.0
        m += 1
        params[m] = 1.0
        m += 1
        if du != 0.0:
            k0 = int(math.floor(min(u0, u1)))
            for k in range(k0, k0 + n_u):
                s = (k - u0) / du
                if 0.0 < s < 1.0:
                    params[m] = s
                    m += 1
        if dv != 0.0:
            k0 = int(math.floor(min(v0, v1)))
            for k in range(k0, k0 + n_v):
                s = (k - v0) / dv
                if 0.0 < s < 1.0:
                    params[m] = s
                    m += 1
        ps = np.sort(params[:m])
        for i in range(m):
            s = ps[i]
            ok &= _mark(cells, u0 + s * du, v0 + s * dv)
            if i + 1 < m and ps[i + 1] > s:
                mid = 0.5 * (s + ps[i + 1])
                ok &= _mark(cells, u0 + mid * du, v0 + mid * dv)
    return ok


@njit(cache=True)
def _scanline_kernel(u, v, cells):
    """Fill cells whose center lies inside the polygon (even-odd rule, cell units)."""
    n = u.shape[0]
    xs = np.empty(n)
    for row in range(cells.shape[0]):
        yc = row + 0.5
        m = 0
        for e in range(n):
            u1, v1 = u[e], v[e]
            u2, v2 = u[(e + 1) % n], v[(e + 1) % n]
            if (v1 > yc) != (v2 > yc):
                xs[m] = u1 + (yc - v1) * (u2 - u1) / (v2 - v1)
                m += 1
        if m == 0:
            continue
        cuts = np.sort(xs[:m])
        for k in range(0, m - 1, 2):
            # centers in [cut_k, cut_k+1), the same tie rule as a rightward ray cast
            lo = int(math.ceil(cuts[k] - 0.5))
            hi = int(math.ceil(cuts[k + 1] - 0.5)) - 1
            lo = max(lo, 0)
            hi = min(hi, cells.shape[1] - 1)
            for col in range(lo, hi + 1):
                cells[row, col] = True


def supercover_cells(polygon: Polygon, spec: GridSpec) -> np.ndarray:
    """Boolean mask of every cell touched by an edge of ``polygon``."""
    a = spec.to_cell_units(polygon.vertices)
    b = np.roll(a, -1, axis=0)
    cells = np.zeros(spec.shape, dtype=np.bool_)
    if not _supercover_kernel(a[:, 0].copy(), a[:, 1].copy(), b[:, 0].copy(), b[:, 1].copy(), cells):
        raise InvalidInputError("polygon extends beyond the raster grid; increase the pad")
    return cells


def segment_cells(a, b, spec: GridSpec) -> np.ndarray:
    """Supercover of an open polyline (consecutive points), used for masks around curves."""
    pts = spec.to_cell_units(a)
    if b is None:
        start, end = pts[:-1], pts[1:]
    else:
        start, end = pts, spec.to_cell_units(b)
    cells = np.zeros(spec.shape, dtype=np.bool_)
    _supercover_kernel(start[:, 0].copy(), start[:, 1].copy(), end[:, 0].copy(), end[:, 1].copy(), cells)
    return cells


def interior_cells(polygon: Polygon, spec: GridSpec) -> np.ndarray:
    """Boolean mask of cells whose center lies inside ``polygon`` (even-odd rule)."""
    uv = spec.to_cell_units(polygon.vertices)
    cells = np.zeros(spec.shape, dtype=np.bool_)
    _scanline_kernel(uv[:, 0].copy(), uv[:, 1].copy(), cells)
    return cells


def rasterize_alltouch(polygon: Polygon, resolution: int, spec: GridSpec | None = None,
                       pad: float = DEFAULT_PAD) -> RasterGrid:
    """Union of the supercover of every edge and the scanline interior fill."""
    if spec is None:
        spec = grid_for_bounds(polygon.bounds, resolution, pad)
    elif spec.resolution != resolution:
        raise InvalidInputError("grid resolution does not match the requested resolution")
    cells = supercover_cells(polygon, spec) | interior_cells(polygon, spec)
    cells.setflags(write=False)
    return RasterGrid(spec, cells)


def raster_area(grid: RasterGrid) -> float:
    return grid.filled_count() / float(grid.resolution) ** 2

"""Polygon and polyline primitives in pixel coordinates.

Coordinates follow image convention: origin at the top-left, x to the right,
y down. Polygons are stored open; the closing edge from the last vertex back
to the first is implicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidInputError, ValidationError

Point2 = Tuple[float, float]

# points closer than this to an edge count as on the boundary
BOUNDARY_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple closed polygon given by its ordered vertices, shape ``(n, 2)``."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidInputError(f"vertices must have shape (n, 2), got {v.shape}")
        if len(v) < 3:
            raise InvalidInputError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("polygon vertices must be finite")
        nxt = np.roll(v, -1, axis=0)
        if np.any(np.all(v == nxt, axis=1)):
            raise InvalidInputError("polygon has identical consecutive vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        if not isinstance(other, Polygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and bool(
            np.array_equal(self.vertices, other.vertices)
        )

    __hash__ = None

    @property
    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Start and end points of every edge, including the closing one."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.vertices + np.array([dx, dy]))

    def scaled(self, factor: float, about: Point2 = (0.0, 0.0)) -> "Polygon":
        c = np.asarray(about, dtype=float)
        return Polygon((self.vertices - c) * factor + c)

    def reversed(self) -> "Polygon":
        return Polygon(self.vertices[::-1])

    def tolist(self) -> list:
        return [[float(x), float(y)] for x, y in self.vertices]


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("bbox coordinates must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate bbox {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @classmethod
    def from_xywh(cls, x, y, w, h) -> "BBox":
        """Build from COCO's ``[x, y, width, height]`` layout."""
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))


def as_polygon(obj) -> Polygon:
    return obj if isinstance(obj, Polygon) else Polygon(np.asarray(obj, dtype=float))


def signed_area(polygon: Polygon) -> float:
    """Shoelace sum / 2; positive when vertices wind with increasing polar angle."""
    v = polygon.vertices
    x, y = v[:, 0], v[:, 1]
    # centring first keeps the cross products small for far-from-origin shapes
    x = x - x.mean()
    y = y - y.mean()
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def shoelace_area(polygon: Polygon) -> float:
    return abs(signed_area(polygon))


def edge_lengths(polygon: Polygon) -> np.ndarray:
    a, b = polygon.edges
    return np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])


def perimeter(polygon: Polygon) -> float:
    return float(edge_lengths(polygon).sum())


def resample_by_arclength(polygon: Polygon, step: float):
    """Sample the closed polyline every ``step`` pixels of arc length.

    Returns ``(t, points)`` where ``t`` has shape ``(m,)`` and ``points`` shape
    ``(m, 2)``, with ``m = ceil(perimeter / step)`` and ``t[0] = 0`` at the
    first vertex.
    """
    if not step > 0:
        raise InvalidInputError(f"step must be positive, got {step}")
    lengths = edge_lengths(polygon)
    total = float(lengths.sum())
    # tolerance absorbs round-off when perimeter is an exact multiple of step
    count = max(1, int(math.ceil(total / step - 1e-9)))
    t = np.arange(count, dtype=float) * step
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    edge = np.searchsorted(cum, t, side="right") - 1
    edge = np.clip(edge, 0, len(lengths) - 1)
    a, b = polygon.edges
    frac = (t - cum[edge]) / lengths[edge]
    pts = a[edge] + frac[:, None] * (b[edge] - a[edge])
    return t, pts


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each of ``points`` (m, 2) to each segment ``a[k]-b[k]``; shape (m, k)."""
    p = np.asarray(points, dtype=float).reshape(-1, 1, 2)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    rel = p - a[None]
    s = np.clip(np.einsum("mkj,kj->mk", rel, d) / dd, 0.0, 1.0)
    closest = a[None] + s[..., None] * d[None]
    return np.hypot(*(p - closest).transpose(2, 0, 1))


def contains_points(polygon: Polygon, points) -> np.ndarray:
    """Even-odd containment for many points. Points on the boundary are inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = pts[:, 0:1], pts[:, 1:2]
    a, b = polygon.edges
    x1, y1, x2, y2 = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    straddle = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossings = np.count_nonzero(straddle & (px < xint), axis=1)
    inside = (crossings % 2) == 1
    on_edge = point_segment_distance(pts, a, b).min(axis=1) <= BOUNDARY_EPS
    return inside | on_edge


def contains_point(polygon: Polygon, p: Point2) -> bool:
    return bool(contains_points(polygon, [p])[0])


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def self_intersections(polygon: Polygon) -> list:
    """Index pairs of non-adjacent edges that touch or cross (O(E^2))."""
    a, b = polygon.edges
    n = len(a)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return []
    p1, p2, q1, q2 = a[i], b[i], a[j], b[j]
    o1 = _orient(*p1.T, *p2.T, *q1.T)
    o2 = _orient(*p1.T, *p2.T, *q2.T)
    o3 = _orient(*q1.T, *q2.T, *p1.T)
    o4 = _orient(*q1.T, *q2.T, *p2.T)
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)

    def on_seg(o, s, e, p):
        within = (
            (np.minimum(s[:, 0], e[:, 0]) <= p[:, 0]) & (p[:, 0] <= np.maximum(s[:, 0], e[:, 0]))
            & (np.minimum(s[:, 1], e[:, 1]) <= p[:, 1]) & (p[:, 1] <= np.maximum(s[:, 1], e[:, 1]))
        )
        return (o == 0) & within

    touching = on_seg(o1, p1, p2, q1) | on_seg(o2, p1, p2, q2) | on_seg(o3, q1, q2, p1) | on_seg(o4, q1, q2, p2)
    hits = np.nonzero(proper | touching)[0]
    # adjacent edges sharing a vertex are skipped above; a backtracking spike
    # (collinear overlap of adjacent edges) is caught here
    adj = np.nonzero(_orient(*a.T, *b.T, *np.roll(b, -1, axis=0).T) == 0)[0]
    spikes = []
    for k in adj:
        d1 = b[k] - a[k]
        d2 = b[(k + 1) % n] - b[k]
        if np.dot(d1, d2) < 0:
            spikes.append((int(k), int((k + 1) % n)))
    return [(int(i[h]), int(j[h])) for h in hits] + spikes


def is_simple(polygon: Polygon) -> bool:
    return not self_intersections(polygon)


def validate_simple(polygon: Polygon, label: str = "polygon") -> Polygon:
    bad = self_intersections(polygon)
    if bad:
        e1, e2 = bad[0]
        raise ValidationError(f"{label} is self-intersecting (edges {e1} and {e2})")
    return polygon


def crop_with_margin(bbox: BBox, margin_fraction: float, image_w: float, image_h: float) -> BBox:
    """Grow ``bbox`` by a fraction of its size on every side, clamped to the image."""
    if not 0 <= margin_fraction < 1:
        raise InvalidInputError(f"margin_fraction must lie in [0, 1), got {margin_fraction}")
    if bbox.x_min < 0 or bbox.y_min < 0 or bbox.x_max > image_w or bbox.y_max > image_h:
        raise InvalidInputError(f"bbox {bbox} lies outside the {image_w}x{image_h} image")
    mx = margin_fraction * bbox.width
    my = margin_fraction * bbox.height
    return BBox(
        max(0.0, bbox.x_min - mx),
        max(0.0, bbox.y_min - my),
        min(float(image_w), bbox.x_max + mx),
        min(float(image_h), bbox.y_max + my),
    )



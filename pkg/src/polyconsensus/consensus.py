"""Mean-curve consensus over a set of rater polygons.

The consensus is the zero level set of the cellwise mean of the raters'
signed distance fields, extracted with marching squares. The same module
provides the asymmetric contour distance, the expected boundary distance of
a consensus to its raters, and a majority-vote (mode) baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distance import ScalarField, sample_field_many, signed_distance_on
from .errors import InvalidInputError, NoContourError, ValidationError
from .geometry import Polygon, signed_area
from .raster import DEFAULT_PAD, GridSpec, grid_for_bounds, grid_for_polygons, interior_cells, supercover_cells

log = logging.getLogger(__name__)

PHASES = ("pre_qa", "post_qa")
DEFAULT_RESOLUTION = 8
DEFAULT_STEP = 0.25
DEFAULT_MIN_IOU = 0.5


@dataclass(frozen=True)
class RaterAnnotation:
    rater_id: str
    phase: str
    polygon: Polygon


@dataclass(frozen=True)
class RaterSet:
    """All annotations of one object, possibly across both QA phases."""

    sample_id: str
    annotations: Tuple[RaterAnnotation, ...]
    image_size: Optional[Tuple[int, int]] = None  # (width, height)
    instructions: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        seen = set()
        for ann in self.annotations:
            if ann.phase not in PHASES:
                raise ValidationError(f"rater {ann.rater_id!r}: unknown phase {ann.phase!r}")
            key = (ann.rater_id, ann.phase)
            if key in seen:
                raise ValidationError(
                    f"rater {ann.rater_id!r} has more than one polygon in phase {ann.phase!r}"
                )
            seen.add(key)
            if self.image_size is not None:
                w, h = self.image_size
                x0, y0, x1, y1 = ann.polygon.bounds
                if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
                    raise ValidationError(
                        f"rater {ann.rater_id!r} ({ann.phase}): polygon leaves the {w}x{h} image"
                    )

    @property
    def phases(self) -> List[str]:
        present = {a.phase for a in self.annotations}
        return [p for p in PHASES if p in present]

    def for_phase(self, phase: str) -> List[RaterAnnotation]:
        if phase not in PHASES:
            raise InvalidInputError(f"phase must be one of {PHASES}, got {phase!r}")
        return [a for a in self.annotations if a.phase == phase]

    def polygons(self, phase: str) -> List[Polygon]:
        return [a.polygon for a in self.for_phase(phase)]

    def rater_ids(self, phase: str) -> List[str]:
        return [a.rater_id for a in self.for_phase(phase)]


@dataclass(frozen=True, eq=False)
class ConsensusCurve:
    """Extracted zero-level curve with its arc-length samples."""

    vertices: np.ndarray
    closed: bool
    perimeter: float
    resolution: int
    t: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    warnings: Tuple[str, ...] = ()

    @property
    def polygon(self) -> Polygon:
        if not self.closed:
            raise InvalidInputError("open consensus curve has no enclosed polygon")
        return Polygon(self.vertices)

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else self.perimeter


@dataclass(frozen=True, eq=False)
class PhaseFields:
    """Per-rater signed distance fields for one phase on a shared grid."""

    spec: GridSpec
    rater_ids: Tuple[str, ...]
    polygons: Tuple[Polygon, ...]
    fields: Tuple[ScalarField, ...]
    warnings: Tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.fields)


# ---------------------------------------------------------------------------
# arc-length helpers


def _polyline_lengths(vertices: np.ndarray, closed: bool) -> np.ndarray:
    pts = np.vstack([vertices, vertices[:1]]) if closed else vertices
    d = np.diff(pts, axis=0)
    return np.hypot(d[:, 0], d[:, 1])


def sample_polyline(vertices: np.ndarray, closed: bool, step: float):
    """Arc-length samples ``(t, points, weights)`` along a polyline.

    Weights are trapezoid quadrature weights: integrating a function over the
    curve is ``sum(weights * f(points))``. On closed curves they wrap around.
    """
    if not step > 0:
        raise InvalidInputError(f"step must be positive, got {step}")
    lengths = _polyline_lengths(vertices, closed)
    total = float(lengths.sum())
    if closed:
        count = max(1, int(math.ceil(total / step - 1e-9)))
    else:
        count = int(math.floor(total / step + 1e-9)) + 1
    t = np.arange(count, dtype=float) * step
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    seg = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(lengths) - 1)
    starts = vertices
    ends = np.roll(vertices, -1, axis=0) if closed else vertices[1:]
    frac = np.where(lengths[seg] > 0, (t - cum[seg]) / np.where(lengths[seg] > 0, lengths[seg], 1.0), 0.0)
    points = starts[seg] + frac[:, None] * (ends[seg] - starts[seg])
    weights = arc_weights(t, total, closed)
    return t, points, weights


def arc_weights(t: np.ndarray, total: float, closed: bool) -> np.ndarray:
    if len(t) == 1:
        return np.array([total])
    gaps = np.diff(t)
    if closed:
        gaps = np.append(gaps, total - t[-1])
        return 0.5 * (gaps + np.roll(gaps, 1))
    w = np.zeros(len(t))
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    # open curves: the remainder after the last sample is assigned to it
    w[-1] += total - t[-1]
    return w


# ---------------------------------------------------------------------------
# fields


def phase_fields(raters: RaterSet, phase: str, resolution: int = DEFAULT_RESOLUTION,
                 pad: float = DEFAULT_PAD, min_polygons: int = 2,
                 min_iou: float = DEFAULT_MIN_IOU) -> PhaseFields:
    """Signed distance fields of every rater in ``phase`` on the union-bbox grid."""
    anns = raters.for_phase(phase)
    if len(anns) < min_polygons:
        raise ValidationError(
            f"sample {raters.sample_id!r}: phase {phase!r} has {len(anns)} polygon(s), "
            f"at least {min_polygons} required"
        )
    polys = [a.polygon for a in anns]
    spec = grid_for_polygons(polys, resolution, pad)
    fields = tuple(signed_distance_on(p, spec) for p in polys)
    warnings = tuple(similarity_warnings([a.rater_id for a in anns], [f.values < 0 for f in fields], min_iou))
    for w in warnings:
        log.debug("%s: %s", raters.sample_id, w)
    return PhaseFields(spec, tuple(a.rater_id for a in anns), tuple(polys), fields, warnings)


def similarity_warnings(rater_ids: Sequence[str], masks: Sequence[np.ndarray], min_iou: float) -> List[str]:
    """Flag rater pairs whose interior masks overlap less than ``min_iou``."""
    out = []
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            union = np.count_nonzero(masks[i] | masks[j])
            iou = np.count_nonzero(masks[i] & masks[j]) / union if union else 1.0
            if iou < min_iou:
                out.append(
                    f"raters {rater_ids[i]!r} and {rater_ids[j]!r} overlap with IoU {iou:.3f} < {min_iou}; "
                    "they may not describe the same shape"
                )
    return out


def _pairwise_sum(stack: np.ndarray) -> np.ndarray:
    while len(stack) > 1:
        half = len(stack) // 2
        paired = stack[:half] + stack[half:2 * half]
        stack = np.concatenate([paired, stack[2 * half:]]) if len(stack) % 2 else paired
    return stack[0]


def mean_sdf(fields: Sequence[ScalarField]) -> ScalarField:
    """Cellwise mean of fields that share one grid.

    Values are sorted per cell before a pairwise summation, so the result does
    not depend on the order of ``fields``.
    """
    if len(fields) < 2:
        raise InvalidInputError(f"mean_sdf needs at least 2 fields, got {len(fields)}")
    spec = fields[0].spec
    for f in fields[1:]:
        if f.spec != spec:
            raise InvalidInputError(f"field geometry mismatch: {f.spec} vs {spec}")
    stack = np.sort(np.stack([f.values for f in fields]), axis=0)
    return ScalarField(spec, _pairwise_sum(stack) / len(fields))


# ---------------------------------------------------------------------------
# marching squares


def _edge_point(edge: int, values: np.ndarray, spec: GridSpec, level: float) -> Tuple[float, float]:
    w = spec.width
    cell, vertical = divmod(edge, 2)
    j, i = divmod(cell, w)
    i2, j2 = (i, j + 1) if vertical else (i + 1, j)
    a = values[j, i]
    b = values[j2, i2]
    s = (level - a) / (b - a)
    u = i + s * (i2 - i) + 0.5
    v = j + s * (j2 - j) + 0.5
    r = spec.resolution
    return spec.x0 + u / r, spec.y0 + v / r


def marching_squares(field: ScalarField, level: float = 0.0) -> List[Tuple[np.ndarray, bool]]:
    """Isocontours of ``field`` at ``level`` as ``(vertices, closed)`` pairs.

    Cell centers with ``value < level`` are inside. Saddle cells are resolved by
    the mean of their four corners. Open chains appear only where the level set
    leaves the grid.
    """
    vals = field.values
    spec = field.spec
    h, w = vals.shape
    if h < 2 or w < 2:
        return []
    inside = vals < level
    c0 = inside[:-1, :-1]
    c1 = inside[:-1, 1:]
    c2 = inside[1:, 1:]
    c3 = inside[1:, :-1]
    case = c0.astype(np.int8) | (c1 << 1) | (c2 << 2) | (c3 << 3)
    rows, cols = np.nonzero((case != 0) & (case != 15))

    nxt: Dict[int, int] = {}
    for j, i in zip(rows.tolist(), cols.tolist()):
        corners = (inside[j, i], inside[j, i + 1], inside[j + 1, i + 1], inside[j + 1, i])
        edges = (2 * (j * w + i), 2 * (j * w + i + 1) + 1, 2 * ((j + 1) * w + i), 2 * (j * w + i) + 1)
        entering = [k for k in range(4) if not corners[k] and corners[(k + 1) % 4]]
        if len(entering) == 1:
            leaving = [k for k in range(4) if corners[k] and not corners[(k + 1) % 4]]
            nxt[edges[entering[0]]] = edges[leaving[0]]
            continue
        center = 0.25 * (vals[j, i] + vals[j, i + 1] + vals[j + 1, i + 1] + vals[j + 1, i])
        shift = -1 if center < level else 1
        for k in entering:
            nxt[edges[k]] = edges[(k + shift) % 4]

    chains: List[Tuple[List[int], bool]] = []
    heads = set(nxt) - set(nxt.values())
    for start in sorted(heads):
        chain = [start]
        cur = start
        while cur in nxt:
            cur = nxt.pop(cur)
            chain.append(cur)
        chains.append((chain, False))
    while nxt:
        start = min(nxt)
        chain = [start]
        cur = nxt.pop(start)
        while cur != start:
            chain.append(cur)
            cur = nxt.pop(cur)
        # canonical start: smallest edge id on the loop
        chains.append((chain, True))

    out = []
    for chain, closed in chains:
        pts = np.array([_edge_point(e, vals, spec, level) for e in chain])
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-12, axis=1)
        pts = pts[keep]
        if closed and len(pts) > 1 and np.all(np.abs(pts[0] - pts[-1]) <= 1e-12):
            pts = pts[:-1]
        if (closed and len(pts) >= 3) or (not closed and len(pts) >= 2):
            out.append((pts, closed))
    return out


def _orient_positive(vertices: np.ndarray) -> np.ndarray:
    if signed_area(Polygon(vertices)) < 0:
        return np.vstack([vertices[:1], vertices[:0:-1]])
    return vertices


def extract_zero_level(field: ScalarField, step: float = DEFAULT_STEP, level: float = 0.0) -> ConsensusCurve:
    """Largest component of the ``level`` set of ``field`` as a consensus curve.

    Closed components are ranked by enclosed area; the rest are reported as
    warnings on the returned curve. When no component closes inside the grid
    the longest open one is returned.
    """
    vals = field.values
    if not (np.any(vals < level) and np.any(vals >= level)):
        raise NoContourError("field does not change sign; no zero-level contour exists")
    components = marching_squares(field, level)
    if not components:
        raise NoContourError("no contour could be extracted from the field")
    closed = [c for c, is_closed in components if is_closed]
    opened = [c for c, is_closed in components if not is_closed]
    warnings = []
    if closed:
        areas = [abs(signed_area(Polygon(c))) for c in closed]
        best = int(np.argmax(areas))
        vertices = _orient_positive(closed[best])
        is_closed = True
        for k, a in enumerate(areas):
            if k != best:
                warnings.append(f"discarded an extra closed zero-level component enclosing {a:.4f} px^2")
        for c in opened:
            warnings.append(f"discarded an open zero-level component with {len(c)} vertices")
    else:
        lengths = [float(_polyline_lengths(c, False).sum()) for c in opened]
        best = int(np.argmax(lengths))
        vertices = opened[best]
        is_closed = False
        for k, length in enumerate(lengths):
            if k != best:
                warnings.append(f"discarded an extra open zero-level component of length {length:.4f} px")
    for w in warnings:
        log.debug(w)
    t, points, weights = sample_polyline(vertices, is_closed, step)
    total = float(_polyline_lengths(vertices, is_closed).sum())
    vertices = np.ascontiguousarray(vertices)
    vertices.setflags(write=False)
    return ConsensusCurve(vertices, is_closed, total, field.resolution, t, points, weights, tuple(warnings))


# ---------------------------------------------------------------------------
# consensus and distances


def mean_curve(raters: RaterSet, phase: str, resolution: int = DEFAULT_RESOLUTION,
               step: float = DEFAULT_STEP, fields: Optional[PhaseFields] = None) -> ConsensusCurve:
    """Consensus of ``phase``: zero level of the mean signed distance field."""
    if fields is None:
        fields = phase_fields(raters, phase, resolution)
    curve = extract_zero_level(mean_sdf(fields.fields), step=step)
    if fields.warnings:
        curve = ConsensusCurve(
            curve.vertices, curve.closed, curve.perimeter, curve.resolution, curve.t,
            curve.points, curve.weights, tuple(fields.warnings) + curve.warnings,
        )
    return curve


def _curve_samples(curve, step: float):
    if isinstance(curve, ConsensusCurve):
        return curve.points, curve.weights
    poly = curve if isinstance(curve, Polygon) else Polygon(curve)
    _, points, weights = sample_polyline(poly.vertices, True, step)
    return points, weights


def _squared_integral(points, weights, field: ScalarField) -> float:
    d = sample_field_many(field, points)
    return float(np.dot(weights, d * d))


def asymmetric_distance(from_curve, to: Polygon, resolution: int = DEFAULT_RESOLUTION,
                        step: float = DEFAULT_STEP, spec: Optional[GridSpec] = None) -> float:
    """Square root of the integral over ``from_curve`` of the squared distance to ``to``.

    Swapping the arguments generally changes the value.
    """
    if spec is None:
        verts = from_curve.vertices if isinstance(from_curve, (Polygon, ConsensusCurve)) else np.asarray(from_curve)
        both = np.vstack([verts, to.vertices])
        spec = grid_for_bounds((*both.min(axis=0), *both.max(axis=0)), resolution)
    points, weights = _curve_samples(from_curve, step)
    field = signed_distance_on(to, spec)
    return math.sqrt(_squared_integral(points, weights, field))


def consensus_objective(candidate, fields: PhaseFields, step: float = DEFAULT_STEP) -> float:
    """Sum over raters of the squared asymmetric distance from ``candidate`` to each rater."""
    points, weights = _curve_samples(candidate, step)
    return float(sum(_squared_integral(points, weights, f) for f in fields.fields))


def boundary_distances(consensus: ConsensusCurve, raters: RaterSet, phase: str,
                       resolution: int = DEFAULT_RESOLUTION,
                       fields: Optional[PhaseFields] = None) -> Dict[str, float]:
    """Mean unsigned distance from the consensus to each rater's boundary, per rater."""
    if fields is None:
        fields = phase_fields(raters, phase, resolution)
    out = {}
    length = float(consensus.weights.sum())
    for rid, f in zip(fields.rater_ids, fields.fields):
        d = np.abs(sample_field_many(f, consensus.points))
        out[rid] = float(np.dot(consensus.weights, d)) / length
    return out


def expected_boundary_distance(consensus: ConsensusCurve, raters: RaterSet, phase: str,
                               resolution: int = DEFAULT_RESOLUTION,
                               fields: Optional[PhaseFields] = None) -> float:
    """Arc-length and rater average of the distance between consensus and raters."""
    per = boundary_distances(consensus, raters, phase, resolution, fields)
    return float(np.mean(sorted(per.values())))


def vote_counts(polygons: Sequence[Polygon], spec: GridSpec) -> np.ndarray:
    """Number of all-touch rasters covering each cell."""
    counts = np.zeros(spec.shape, dtype=np.int32)
    for p in polygons:
        counts += supercover_cells(p, spec) | interior_cells(p, spec)
    return counts


def mode_shape(raters: RaterSet, phase: str, resolution: int = DEFAULT_RESOLUTION,
               pad: float = DEFAULT_PAD) -> Polygon:
    """Majority-vote shape: cells filled in more than half of the all-touch rasters."""
    polys = raters.polygons(phase)
    if len(polys) < 2:
        raise ValidationError(f"mode shape needs at least 2 polygons, got {len(polys)}")
    spec = grid_for_polygons(polys, resolution, pad)
    counts = vote_counts(polys, spec)
    n = len(polys)
    if not np.any(2 * counts > n):
        raise NoContourError("no cell is covered by a strict majority of raters")
    # level halfway between the largest minority count and the smallest
    # majority count, so no cell center ever sits exactly on the contour
    vote = ScalarField(spec, (n // 2 + 0.5 - counts) / n)
    curve = extract_zero_level(vote, step=DEFAULT_STEP)
    return Polygon(curve.vertices)

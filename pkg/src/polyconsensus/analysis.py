"""One-call analysis of a sample phase, shared by the CLI commands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .consensus import (
    DEFAULT_RESOLUTION,
    DEFAULT_STEP,
    ConsensusCurve,
    PhaseFields,
    RaterSet,
    boundary_distances,
    consensus_objective,
    mean_curve,
    mode_shape,
    phase_fields,
    sample_polyline,
)
from .distance import ScalarField, sample_field_many, signed_distance_on
from .geometry import Polygon, perimeter, shoelace_area
from .local_uncertainty import (
    DEFAULT_BAND,
    DEFAULT_THRESHOLD,
    DEFAULT_WINDOW,
    DeviationProfile,
    FlaggedSegment,
    flag_segments,
    local_sigma,
    signed_deviations,
    variance_heatmap,
)


@dataclass
class SampleAnalysis:
    raters: RaterSet
    phase: str
    resolution: int
    step: float
    fields: PhaseFields
    consensus: ConsensusCurve
    d_b_per_rater: Dict[str, float]
    asymmetric: Dict[str, Dict[str, float]]
    warnings: List[str] = field(default_factory=list)
    mode: Optional[Polygon] = None
    mode_objective: Optional[float] = None
    mean_objective: Optional[float] = None
    profile: Optional[DeviationProfile] = None
    segments: List[FlaggedSegment] = field(default_factory=list)
    threshold: Optional[float] = None
    window: Optional[float] = None
    heatmap: Optional[ScalarField] = None

    @property
    def d_b(self) -> float:
        return float(np.mean([self.d_b_per_rater[r] for r in sorted(self.d_b_per_rater)]))


def _asymmetric_table(consensus: ConsensusCurve, fields: PhaseFields, step: float) -> Dict[str, Dict[str, float]]:
    table = {}
    consensus_field = signed_distance_on(consensus.polygon, fields.spec) if consensus.closed else None
    for rid, poly, f in zip(fields.rater_ids, fields.polygons, fields.fields):
        d = sample_field_many(f, consensus.points)
        from_consensus = math.sqrt(float(np.dot(consensus.weights, d * d)))
        entry = {"from_consensus": from_consensus}
        if consensus_field is not None:
            _, pts, w = sample_polyline(poly.vertices, True, step)
            e = sample_field_many(consensus_field, pts)
            sq = float(np.dot(w, e * e))
            entry["to_consensus"] = math.sqrt(sq)
            entry["to_consensus_per_length"] = sq / perimeter(poly)
        table[rid] = entry
    return table


def analyze_sample(raters: RaterSet, phase: str, resolution: int = DEFAULT_RESOLUTION,
                   step: float = DEFAULT_STEP, mode: bool = False, local: bool = False,
                   threshold: float = DEFAULT_THRESHOLD, window: float = DEFAULT_WINDOW,
                   band: float = DEFAULT_BAND, heatmap: bool = False) -> SampleAnalysis:
    fields = phase_fields(raters, phase, resolution)
    consensus = mean_curve(raters, phase, resolution, step=step, fields=fields)
    result = SampleAnalysis(
        raters=raters,
        phase=phase,
        resolution=resolution,
        step=step,
        fields=fields,
        consensus=consensus,
        d_b_per_rater=boundary_distances(consensus, raters, phase, resolution, fields=fields),
        asymmetric=_asymmetric_table(consensus, fields, step),
        warnings=list(consensus.warnings),
    )
    if mode:
        result.mode = mode_shape(raters, phase, resolution)
        result.mode_objective = consensus_objective(result.mode, fields, step)
        result.mean_objective = consensus_objective(consensus, fields, step)
    if local:
        result.profile = local_sigma(signed_deviations(consensus, raters, phase, resolution, fields), window)
        result.segments = flag_segments(result.profile, threshold)
        result.threshold = threshold
        result.window = window
    if heatmap:
        result.heatmap = variance_heatmap(consensus, raters, phase, resolution, band, fields)
    return result


def polygon_summary(vertices: np.ndarray, closed: bool = True) -> dict:
    out = {"closed": bool(closed), "n_vertices": int(len(vertices))}
    if closed:
        poly = Polygon(vertices)
        out["perimeter"] = perimeter(poly)
        out["area"] = shoelace_area(poly)
    out["vertices"] = [[float(x), float(y)] for x, y in vertices]
    return out

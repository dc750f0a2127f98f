"""Local disagreement along the consensus curve.

Each rater's signed distance field is sampled at the arc-length samples of
the consensus. The per-sample RMS over raters, smoothed by a circular moving
average, gives a deviation profile ``sigma(t)``; arcs where it exceeds a
threshold are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .consensus import DEFAULT_RESOLUTION, ConsensusCurve, PhaseFields, RaterSet, phase_fields
from .distance import ScalarField, sample_field_many, squared_edt_cells
from .errors import InvalidInputError
from .raster import segment_cells

DEFAULT_THRESHOLD = 0.5
DEFAULT_WINDOW = 2.0
DEFAULT_BAND = 3.0


@dataclass(frozen=True, eq=False)
class DeviationProfile:
    t: np.ndarray
    points: np.ndarray
    rater_ids: Tuple[str, ...]
    per_rater_signed: np.ndarray  # (raters, samples)
    perimeter: float
    closed: bool
    sigma: Optional[np.ndarray] = None

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else self.perimeter

    def rms(self) -> np.ndarray:
        # sorted before summing so the result does not depend on rater order
        sq = np.sort(self.per_rater_signed ** 2, axis=0)
        return np.sqrt(sq.sum(axis=0) / len(sq))


@dataclass(frozen=True, eq=False)
class FlaggedSegment:
    t_start: float
    t_end: float  # may exceed the perimeter when the segment wraps past t = 0
    peak_sigma: float
    indices: np.ndarray
    polyline: np.ndarray

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


def signed_deviations(consensus: ConsensusCurve, raters: RaterSet, phase: str,
                      resolution: int = DEFAULT_RESOLUTION,
                      fields: Optional[PhaseFields] = None) -> DeviationProfile:
    """Signed distance of every rater at every consensus sample (negative: sample inside the rater)."""
    if fields is None:
        fields = phase_fields(raters, phase, resolution)
    rows = np.stack([sample_field_many(f, consensus.points) for f in fields.fields])
    return DeviationProfile(
        t=consensus.t,
        points=consensus.points,
        rater_ids=fields.rater_ids,
        per_rater_signed=rows,
        perimeter=consensus.perimeter,
        closed=consensus.closed,
    )


def _moving_average(values: np.ndarray, half: int, closed: bool) -> np.ndarray:
    m = len(values)
    offsets = np.arange(-half, half + 1)
    idx = np.arange(m)[:, None] + offsets[None, :]
    if closed:
        return values[idx % m].mean(axis=1)
    valid = (idx >= 0) & (idx < m)
    taken = np.where(valid, values[np.clip(idx, 0, m - 1)], 0.0)
    return taken.sum(axis=1) / valid.sum(axis=1)


def local_sigma(profile: DeviationProfile, window: float = DEFAULT_WINDOW) -> DeviationProfile:
    """Per-sample RMS deviation over raters, averaged over an arc-length window."""
    step = profile.step
    if not window >= step - 1e-12:
        raise InvalidInputError(f"window ({window}) must be at least the sample step ({step})")
    half = int(round(window / (2.0 * step)))
    sigma = _moving_average(profile.rms(), half, profile.closed)
    return replace(profile, sigma=np.maximum(sigma, 0.0))


def _runs(mask: np.ndarray, closed: bool) -> List[np.ndarray]:
    m = len(mask)
    if not mask.any():
        return []
    if mask.all():
        return [np.arange(m)]
    edges = np.diff(mask.astype(np.int8))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    stops = list(np.nonzero(edges == -1)[0] + 1)
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        stops.append(m)
    runs = [np.arange(a, b) for a, b in zip(starts, stops)]
    if closed and mask[0] and mask[-1] and len(runs) > 1:
        head = runs.pop(0)
        runs[-1] = np.concatenate([runs[-1], head])
    return runs


def flag_segments(profile: DeviationProfile, threshold: float = DEFAULT_THRESHOLD) -> List[FlaggedSegment]:
    """Maximal arcs where ``sigma > threshold``, merged across t = 0 on closed curves."""
    if profile.sigma is None:
        raise InvalidInputError("profile has no sigma; run local_sigma first")
    t = profile.t
    total = profile.perimeter
    gaps = np.append(np.diff(t), total - t[-1]) if len(t) else np.array([])
    out = []
    for run in _runs(profile.sigma > threshold, profile.closed):
        first, last = int(run[0]), int(run[-1])
        t_start = float(t[first])
        t_end = float(t[last] + gaps[last])
        if last < first:
            t_end += total
        if len(run) == len(t):
            t_start, t_end = float(t[0]), float(t[0]) + total
        out.append(
            FlaggedSegment(
                t_start=t_start,
                t_end=t_end,
                peak_sigma=float(profile.sigma[run].max()),
                indices=run,
                polyline=profile.points[run],
            )
        )
    return out


def flagged_length(segments: List[FlaggedSegment]) -> float:
    return float(sum(s.length for s in segments))


def curve_band_mask(consensus: ConsensusCurve, spec, band: float) -> np.ndarray:
    """Cells whose center lies within ``band`` pixels of the consensus polyline."""
    verts = consensus.vertices
    if consensus.closed:
        verts = np.vstack([verts, verts[:1]])
    seeds = segment_cells(verts, None, spec)
    return np.sqrt(squared_edt_cells(seeds)) / spec.resolution <= band


def variance_heatmap(consensus: ConsensusCurve, raters: RaterSet, phase: str,
                     resolution: int = DEFAULT_RESOLUTION, band: float = DEFAULT_BAND,
                     fields: Optional[PhaseFields] = None) -> ScalarField:
    """Per-cell population std of the raters' signed distances, kept within ``band`` of the consensus."""
    if not band > 0:
        raise InvalidInputError(f"band must be positive, got {band}")
    if fields is None:
        fields = phase_fields(raters, phase, resolution)
    std = np.stack([f.values for f in fields.fields]).std(axis=0)
    mask = curve_band_mask(consensus, fields.spec, band)
    return ScalarField(fields.spec, np.where(mask, std, 0.0))

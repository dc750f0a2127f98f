"""Synthetic shapes and correlated rater noise.

Randomness comes from numpy's PCG64 bit generator. Raw 64-bit outputs are
turned into doubles with the top 53 bits and normals with Box-Muller, so a
given seed yields the same stream on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .consensus import RaterAnnotation, RaterSet
from .errors import GenerationError, InvalidInputError
from .geometry import Polygon, is_simple, resample_by_arclength, signed_area

CIRCLE_VERTICES = 256
DENSE_STEP = 0.5
DEFAULT_KINDS = ("diamond", "octagon", "circle", "ngon:6", "star:5:0.6")
MAX_RETRIES = 20
FRAME_SMOOTHING = 2.0

_U64 = (1 << 64) - 1


class GaussianStream:
    """Uniform and Box-Muller normal draws on top of PCG64 raw output."""

    def __init__(self, seed):
        words = [int(w) & _U64 for w in (seed if isinstance(seed, (list, tuple)) else [seed])]
        self._bits = np.random.PCG64(np.random.SeedSequence(words))

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in (0, 1]."""
        raw = self._bits.random_raw(n).astype(np.uint64)
        return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = rad * np.cos(2.0 * np.pi * u2)
        z[1::2] = rad * np.sin(2.0 * np.pi * u2)
        return z[:n]


def derive_seed(*words: int) -> int:
    """Combine integers into one 64-bit seed."""
    return int(np.random.SeedSequence([int(w) & _U64 for w in words]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class NoiseModel:
    sigma_normal: float = 0.0
    sigma_tangent: float = 0.0
    correlation_length: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_normal < 0 or self.sigma_tangent < 0:
            raise InvalidInputError("noise sigmas must be non-negative")
        if self.correlation_length < 0:
            raise InvalidInputError("correlation_length must be non-negative")


def _regular(n: int, radius: float, center, phase: float = 0.0) -> np.ndarray:
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])


def parse_kind(kind: str) -> Tuple[str, tuple]:
    """``"ngon:6"`` -> ("ngon", (6,)); ``"star:5:0.6"`` -> ("star", (5, 0.6))."""
    parts = str(kind).split(":")
    name = parts[0]
    try:
        if name == "ngon":
            return name, (int(parts[1]),)
        if name == "star":
            ratio = float(parts[2]) if len(parts) > 2 else 0.5
            return name, (int(parts[1]), ratio)
    except (IndexError, ValueError):
        raise InvalidInputError(f"malformed shape kind {kind!r}") from None
    if name in ("diamond", "octagon", "circle") and len(parts) == 1:
        return name, ()
    raise InvalidInputError(f"unknown shape kind {kind!r}")


def make_shape(kind: str, radius: float, center=(0.0, 0.0), n: Optional[int] = None,
               inner_ratio: float = 0.5) -> Polygon:
    """Canonical test shapes; the first vertex sits at angle 0 and angles increase."""
    if not radius > 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    name, args = parse_kind(kind) if ":" in str(kind) else (kind, ())
    if name == "diamond":
        return Polygon(_regular(4, radius, center))
    if name == "octagon":
        return Polygon(_regular(8, radius, center))
    if name == "circle":
        return Polygon(_regular(CIRCLE_VERTICES, radius, center))
    if name in ("ngon", "regular_ngon"):
        count = args[0] if args else n
        if count is None or count < 3:
            raise InvalidInputError(f"regular n-gon needs n >= 3, got {count}")
        return Polygon(_regular(int(count), radius, center))
    if name == "star":
        points = args[0] if args else n
        ratio = args[1] if len(args) > 1 else inner_ratio
        if points is None or points < 3:
            raise InvalidInputError(f"star needs at least 3 points, got {points}")
        if not 0 < ratio < 1:
            raise InvalidInputError(f"star inner_ratio must lie in (0, 1), got {ratio}")
        outer = _regular(int(points), radius, center)
        inner = _regular(int(points), radius * ratio, center, phase=np.pi / points)
        verts = np.empty((2 * int(points), 2))
        verts[0::2] = outer
        verts[1::2] = inner
        return Polygon(verts)
    raise InvalidInputError(f"unknown shape kind {kind!r}")


def _frames(vertices: np.ndarray):
    """Unit tangents and outward normals at each vertex (central differences)."""
    tangent = np.roll(vertices, -1, axis=0) - np.roll(vertices, 1, axis=0)
    tangent /= np.hypot(tangent[:, 0], tangent[:, 1])[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    if signed_area(Polygon(vertices)) < 0:
        normal = -normal
    return tangent, normal


def _smooth(noise: np.ndarray, arc: np.ndarray, total: float, length: float) -> np.ndarray:
    """Gaussian smoothing along a closed curve, rescaled to keep unit marginal variance."""
    if length <= 0:
        return noise
    out = np.empty_like(noise)
    chunk = 512
    for start in range(0, len(arc), chunk):
        d = np.abs(arc[start:start + chunk, None] - arc[None, :])
        d = np.minimum(d, total - d)
        w = np.exp(-0.5 * (d / length) ** 2)
        w /= w.sum(axis=1, keepdims=True)
        out[start:start + chunk] = (w @ noise) / np.sqrt((w * w).sum(axis=1))
    return out


def _smooth_points(vertices: np.ndarray, arc: np.ndarray, total: float, length: float) -> np.ndarray:
    out = np.empty_like(vertices)
    chunk = 512
    for start in range(0, len(arc), chunk):
        d = np.abs(arc[start:start + chunk, None] - arc[None, :])
        d = np.minimum(d, total - d)
        w = np.exp(-0.5 * (d / length) ** 2)
        out[start:start + chunk] = (w @ vertices) / w.sum(axis=1, keepdims=True)
    return out


def perturb(shape: Polygon, model: NoiseModel, max_retries: int = MAX_RETRIES) -> Polygon:
    """Displace every vertex by correlated Gaussian noise along its normal and tangent.

    Deterministic for a given ``model.seed``. Draws that self-intersect are
    discarded and redrawn from the same stream, up to ``max_retries`` times.
    """
    if model.sigma_normal == 0 and model.sigma_tangent == 0:
        return Polygon(shape.vertices)
    v = shape.vertices
    seg = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    total = float(seg.sum())
    # frames from a smoothed copy of the contour rotate gradually around corners,
    # which keeps inward displacements from folding the curve there
    tangent, normal = _frames(_smooth_points(v, arc, total, max(model.correlation_length, FRAME_SMOOTHING)))
    stream = GaussianStream(model.seed)
    for _ in range(max_retries + 1):
        zn = _smooth(stream.normal(len(v)), arc, total, model.correlation_length)
        zt = _smooth(stream.normal(len(v)), arc, total, model.correlation_length)
        moved = v + (model.sigma_normal * zn)[:, None] * normal + (model.sigma_tangent * zt)[:, None] * tangent
        try:
            candidate = Polygon(moved)
        except InvalidInputError:
            continue
        if is_simple(candidate):
            return candidate
    raise GenerationError(f"no simple perturbation found after {max_retries + 1} draws (seed {model.seed})")


@dataclass(frozen=True)
class SimulatedSample:
    raters: RaterSet
    ground_truth: Polygon
    kind: str


def dense_ground_truth(shape: Polygon, step: float = DENSE_STEP) -> Polygon:
    _, pts = resample_by_arclength(shape, step)
    return Polygon(pts)


def simulate_sample(index: int, n_raters: int, pre_noise: Optional[NoiseModel],
                    post_noise: Optional[NoiseModel], seed: int,
                    kinds: Sequence[str] = DEFAULT_KINDS,
                    radius_range: Tuple[float, float] = (10.0, 16.0), margin: float = 6.0,
                    kind: Optional[str] = None, radius: Optional[float] = None) -> SimulatedSample:
    """One sample; ``kind`` and ``radius`` pin the shape, otherwise both are drawn.

    A pinned radius also pins the center to the middle of the image, so pinned
    samples of different kinds overlay each other exactly.
    """
    sample_seed = derive_seed(seed, index)
    pick = GaussianStream([sample_seed, 0]).uniform(4)
    if kind is None:
        kind = kinds[min(int(pick[0] * len(kinds)), len(kinds) - 1)]
    jitter = radius is None
    if radius is None:
        radius = radius_range[0] + (radius_range[1] - radius_range[0]) * pick[1]
    size = int(math.ceil(2 * (radius + margin)))
    center = (size / 2, size / 2)
    if jitter:
        center = (size / 2 + pick[2] - 0.5, size / 2 + pick[3] - 0.5)
    truth = dense_ground_truth(make_shape(kind, radius, center))
    annotations = []
    for phase_index, (phase, model) in enumerate((("pre_qa", pre_noise), ("post_qa", post_noise))):
        if model is None:
            continue
        for r in range(n_raters):
            rater_model = replace(model, seed=derive_seed(sample_seed, phase_index + 1, r))
            annotations.append(RaterAnnotation(f"rater_{r:02d}", phase, perturb(truth, rater_model)))
    raters = RaterSet(f"sample_{index:03d}", tuple(annotations), image_size=(size, size))
    return SimulatedSample(raters, truth, kind)


def simulate_cohort(n_samples: int, n_raters: int, pre_noise: Optional[NoiseModel],
                    post_noise: Optional[NoiseModel], seed: int,
                    kinds: Sequence[str] = DEFAULT_KINDS) -> List[SimulatedSample]:
    """Ground-truth shapes with noisy raters for each QA phase.

    Each sample draws from its own seed ``derive_seed(seed, index)``, so
    samples can be generated independently and in any order.
    """
    if n_samples < 2 or n_raters < 2:
        raise InvalidInputError("simulate_cohort needs n_samples >= 2 and n_raters >= 2")
    for k in kinds:
        parse_kind(k)
    return [simulate_sample(i, n_raters, pre_noise, post_noise, seed, kinds) for i in range(n_samples)]

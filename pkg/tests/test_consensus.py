import math

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given
from hypothesis import strategies as st

from polyconsensus import (
    InvalidInputError,
    NoContourError,
    Polygon,
    RaterAnnotation,
    RaterSet,
    ValidationError,
)
from polyconsensus.consensus import (
    asymmetric_distance,
    boundary_distances,
    consensus_objective,
    expected_boundary_distance,
    extract_zero_level,
    marching_squares,
    mean_curve,
    mean_sdf,
    mode_shape,
    phase_fields,
    vote_counts,
)
from polyconsensus.distance import ScalarField, signed_distance_on
from polyconsensus.geometry import contains_points, is_simple, perimeter
from polyconsensus.raster import GridSpec, grid_for_polygons

from conftest import ngon, rater_set, square, star

R = 8


def mean_radius(curve, center=(0.0, 0.0)):
    rad = np.hypot(curve.points[:, 0] - center[0], curve.points[:, 1] - center[1])
    return float(np.dot(curve.weights, rad) / curve.weights.sum())


def iou(a: Polygon, b: Polygon) -> float:
    pa, pb = sg.Polygon(a.vertices), sg.Polygon(b.vertices)
    return pa.intersection(pb).area / pa.union(pb).area


# -- RaterSet ---------------------------------------------------------------


def test_rater_set_rules():
    p = ngon(8, 3, (5, 5))
    with pytest.raises(ValidationError):
        RaterSet("s", (RaterAnnotation("a", "during_qa", p),))
    with pytest.raises(ValidationError):
        RaterSet("s", (RaterAnnotation("a", "pre_qa", p), RaterAnnotation("a", "pre_qa", p)))
    with pytest.raises(ValidationError):
        RaterSet("s", (RaterAnnotation("a", "pre_qa", p),), image_size=(6, 6))
    rs = RaterSet("s", (RaterAnnotation("a", "pre_qa", p), RaterAnnotation("a", "post_qa", p)), (10, 10))
    assert rs.phases == ["pre_qa", "post_qa"]
    assert rs.rater_ids("post_qa") == ["a"]


def test_phase_fields_needs_two_polygons():
    with pytest.raises(ValidationError, match="at least 2"):
        phase_fields(rater_set([ngon(8, 3)]), "pre_qa", R)


def test_low_overlap_warns():
    rs = rater_set([ngon(32, 3), ngon(32, 3, (4.5, 0))])
    curve = mean_curve(rs, "pre_qa", 4)
    assert any("IoU" in w for w in curve.warnings)


# -- mean_sdf ---------------------------------------------------------------


def test_mean_sdf_examples():
    spec = GridSpec(2, 0.0, 0.0, 6, 5)
    rng = np.random.default_rng(0)
    f = ScalarField(spec, rng.normal(size=spec.shape))
    assert np.array_equal(mean_sdf([f, f]).values, f.values)
    a = ScalarField(spec, np.full(spec.shape, 1.5))
    b = ScalarField(spec, np.full(spec.shape, -4.0))
    assert np.allclose(mean_sdf([a, b]).values, -1.25)
    with pytest.raises(InvalidInputError):
        mean_sdf([a, ScalarField(GridSpec(2, 1.0, 0.0, 6, 5), a.values)])
    with pytest.raises(InvalidInputError):
        mean_sdf([a])


def test_mean_sdf_is_permutation_invariant():
    spec = GridSpec(1, 0.0, 0.0, 7, 7)
    rng = np.random.default_rng(1)
    fields = [ScalarField(spec, rng.normal(size=spec.shape) * 10 ** k) for k in range(6)]
    ref = mean_sdf(fields).values
    for _ in range(10):
        perm = rng.permutation(len(fields))
        assert np.array_equal(mean_sdf([fields[k] for k in perm]).values, ref)


def test_concentric_mean_field_zero_level():
    polys = [ngon(256, 5), ngon(256, 9)]
    spec = grid_for_polygons(polys, R)
    curve = extract_zero_level(mean_sdf([signed_distance_on(p, spec) for p in polys]))
    rad = np.hypot(curve.vertices[:, 0], curve.vertices[:, 1])
    assert np.all(np.abs(rad - 7.0) <= 2.0 / R)


# -- extraction -------------------------------------------------------------


def test_linear_field_gives_straight_line():
    spec = GridSpec(4, 0.0, 0.0, 24, 24)
    xs, ys = spec.cell_centers()
    field = ScalarField(spec, np.broadcast_to((ys - 3.25)[:, None], spec.shape).copy())
    curve = extract_zero_level(field)
    assert not curve.closed
    assert np.max(np.abs(curve.vertices[:, 1] - 3.25)) < 1e-9
    assert curve.perimeter == pytest.approx(xs[-1] - xs[0])


def test_circle_sdf_zero_level():
    curve = extract_zero_level(signed_distance_on(ngon(256, 7), grid_for_polygons([ngon(256, 7)], R)))
    assert curve.closed
    assert mean_radius(curve) == pytest.approx(7.0, abs=0.15)
    assert is_simple(curve.polygon)


def test_two_blobs_keep_larger():
    big, small = ngon(64, 5, (0, 0)), ngon(64, 2, (12, 0))
    spec = grid_for_polygons([big, small], R)
    f = np.minimum(signed_distance_on(big, spec).values, signed_distance_on(small, spec).values)
    curve = extract_zero_level(ScalarField(spec, f))
    assert len(curve.warnings) == 1
    assert mean_radius(curve) == pytest.approx(5.0, abs=0.15)


def test_single_signed_field_has_no_contour():
    spec = GridSpec(2, 0.0, 0.0, 4, 4)
    with pytest.raises(NoContourError):
        extract_zero_level(ScalarField(spec, np.ones(spec.shape)))


def test_saddle_resolution_by_average():
    spec = GridSpec(1, 0.0, 0.0, 2, 2)
    # diagonal negatives with negative centre average join into one band
    joined = marching_squares(ScalarField(spec, np.array([[-1.0, 0.5], [0.5, -1.0]])))
    split = marching_squares(ScalarField(spec, np.array([[-0.5, 1.0], [1.0, -0.5]])))
    assert len(joined) == 2 and len(split) == 2
    lengths_joined = sorted(float(np.hypot(*np.diff(c, axis=0).T).sum()) for c, _ in joined)
    lengths_split = sorted(float(np.hypot(*np.diff(c, axis=0).T).sum()) for c, _ in split)
    assert lengths_joined != lengths_split


# -- mean_curve -------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3, 5])
def test_identical_copies(k):
    rs = rater_set([star(5, 9, 4)] * k)
    curve = mean_curve(rs, "pre_qa", R)
    assert expected_boundary_distance(curve, rs, "pre_qa", R) <= 1.5 / R


def test_concentric_circles_and_squares():
    curve = mean_curve(rater_set([ngon(256, 5), ngon(256, 9)]), "pre_qa", R)
    assert mean_radius(curve) == pytest.approx(7.0, abs=0.15)
    curve = mean_curve(rater_set([square(1), square(2)]), "pre_qa", R)
    v = curve.vertices
    crossings = []
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        if (a[1] <= 0 < b[1] or b[1] <= 0 < a[1]) and max(a[0], b[0]) > 0:
            crossings.append(a[0] + (0 - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
    assert len(crossings) == 1
    assert crossings[0] == pytest.approx(1.5, abs=0.15)


def test_duplicate_is_idempotent():
    s = star(6, 8, 3.5, (0.3, 0.2))
    spec = grid_for_polygons([s], R)
    single = extract_zero_level(signed_distance_on(s, spec))
    double = mean_curve(rater_set([s, s]), "pre_qa", R)
    assert np.array_equal(single.vertices, double.vertices)


@given(st.integers(-15, 15), st.integers(-15, 15))
def test_translation_equivariance(dx, dy):
    polys = [ngon(40, 6, (0.2, 0.1)), star(5, 7, 4, (0.5, -0.3))]
    base = mean_curve(rater_set(polys), "pre_qa", 4)
    moved = mean_curve(rater_set([p.translated(dx, dy) for p in polys]), "pre_qa", 4)
    assert np.max(np.abs(moved.vertices - (base.vertices + (dx, dy)))) < 1e-9


# -- distances --------------------------------------------------------------


def test_asymmetric_distance_examples():
    c5, c9 = ngon(256, 5), ngon(256, 9)
    same = asymmetric_distance(c5, c5, R)
    assert same <= math.sqrt(perimeter(c5)) * math.sqrt(2) / R
    assert asymmetric_distance(c5, c9, R) == pytest.approx(math.sqrt(160 * math.pi), rel=0.02)
    assert asymmetric_distance(c9, c5, R) == pytest.approx(math.sqrt(288 * math.pi), rel=0.02)


def test_boundary_distance_examples():
    rs = rater_set([ngon(256, 5), ngon(256, 9)])
    curve = mean_curve(rs, "pre_qa", R)
    per = boundary_distances(curve, rs, "pre_qa", R)
    assert set(per) == {"r0", "r1"}
    assert expected_boundary_distance(curve, rs, "pre_qa", R) == pytest.approx(2.0, abs=0.1)
    fields = phase_fields(rs, "pre_qa", R)
    assert consensus_objective(curve, fields) < consensus_objective(ngon(256, 5), fields)


# -- mode -------------------------------------------------------------------


def test_mode_of_identical_shapes():
    s = ngon(128, 10, (0.3, 0.1))
    mode = mode_shape(rater_set([s, s, s]), "pre_qa", R)
    assert iou(mode, s) >= 0.98


def test_mode_ignores_outlier():
    s = ngon(32, 6)
    mode = mode_shape(rater_set([s, s, s.translated(20, 0)]), "pre_qa", R)
    assert iou(mode, s) >= 0.95


def test_mode_of_two_is_intersection():
    a, b = ngon(32, 6), ngon(32, 6, (3.3, 1.2))
    rs = rater_set([a, b])
    mode = mode_shape(rs, "pre_qa", R)
    spec = grid_for_polygons([a, b], R)
    both = vote_counts([a, b], spec) == 2
    xs, ys = spec.cell_centers()
    centers = np.column_stack([np.tile(xs, len(ys)), np.repeat(ys, len(xs))])
    assert np.array_equal(contains_points(mode, centers).reshape(spec.shape), both)


def test_mode_without_majority():
    with pytest.raises(NoContourError):
        mode_shape(rater_set([ngon(16, 3), ngon(16, 3, (20, 0))]), "pre_qa", 4)

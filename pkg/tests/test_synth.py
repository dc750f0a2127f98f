import math

import numpy as np
import pytest

from polyconsensus import GenerationError, InvalidInputError
from polyconsensus.consensus import expected_boundary_distance, mean_curve
from polyconsensus.dataset_io import dumps_multirater
from polyconsensus.geometry import is_simple, perimeter, shoelace_area
from polyconsensus.synth import (
    GaussianStream,
    NoiseModel,
    derive_seed,
    make_shape,
    parse_kind,
    perturb,
    simulate_cohort,
    simulate_sample,
)


def test_shape_examples():
    d = make_shape("diamond", 1)
    assert np.allclose(d.vertices, [(1, 0), (0, 1), (-1, 0), (0, -1)])
    assert shoelace_area(d) == pytest.approx(2.0)
    assert shoelace_area(make_shape("octagon", 1)) == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert perimeter(make_shape("circle", 10)) == pytest.approx(2 * 256 * 10 * math.sin(math.pi / 256), abs=1e-6)
    assert len(make_shape("ngon:6", 3)) == 6
    assert len(make_shape("star:5:0.6", 3)) == 10


@pytest.mark.parametrize("kind", ["blob", "ngon", "ngon:2", "star:5:1.5", "circle:3"])
def test_bad_kinds(kind):
    with pytest.raises(InvalidInputError):
        make_shape(kind, 3)


def test_parse_kind():
    assert parse_kind("ngon:6") == ("ngon", (6,))
    assert parse_kind("star:5:0.6") == ("star", (5, 0.6))
    assert parse_kind("circle") == ("circle", ())


def test_stream_is_reproducible():
    a = GaussianStream(42).normal(1001)
    b = GaussianStream(42).normal(1001)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, GaussianStream(43).normal(1001))
    u = GaussianStream([1, 2]).uniform(10000)
    assert u.min() > 0 and u.max() <= 1
    z = GaussianStream(7).normal(200000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
    assert derive_seed(1, 2) == derive_seed(1, 2) != derive_seed(2, 1)


def test_perturb_zero_and_determinism():
    shape = make_shape("star:5:0.6", 12)
    assert perturb(shape, NoiseModel()) == shape
    model = NoiseModel(0.5, 0.3, 2.0, seed=11)
    a, b = perturb(shape, model), perturb(shape, model)
    assert a == b
    assert len(a) == len(shape) and is_simple(a)
    assert perturb(shape, NoiseModel(0.5, 0.3, 2.0, seed=12)) != a


def test_perturb_radial_rms():
    circle = make_shape("circle", 20)
    devs = []
    for seed in range(40):
        p = perturb(circle, NoiseModel(sigma_normal=0.5, correlation_length=2.0, seed=seed))
        devs.append(np.hypot(p.vertices[:, 0], p.vertices[:, 1]) - 20)
    devs = np.concatenate(devs)
    assert len(devs) >= 10000
    assert math.sqrt(np.mean(devs ** 2)) == pytest.approx(0.5, rel=0.10)


def test_perturb_gives_up():
    tiny = make_shape("star:5:0.3", 1.0)
    with pytest.raises(GenerationError):
        perturb(tiny, NoiseModel(sigma_normal=3.0, correlation_length=0.0, seed=1), max_retries=2)


def test_noise_model_validation():
    with pytest.raises(InvalidInputError):
        NoiseModel(sigma_normal=-1)
    with pytest.raises(InvalidInputError):
        NoiseModel(correlation_length=-1)


def test_cohort_reproducible_and_shaped():
    pre, post = NoiseModel(0.8), NoiseModel(0.5)
    a = simulate_cohort(3, 2, pre, post, seed=5)
    b = simulate_cohort(3, 2, pre, post, seed=5)
    assert [dumps_multirater(s.raters) for s in a] == [dumps_multirater(s.raters) for s in b]
    for s in a:
        assert len(s.raters.for_phase("pre_qa")) == 2 and len(s.raters.for_phase("post_qa")) == 2
        assert is_simple(s.ground_truth)
    # samples are independent of cohort size
    assert dumps_multirater(simulate_cohort(2, 2, pre, post, seed=5)[1].raters) == dumps_multirater(a[1].raters)
    with pytest.raises(InvalidInputError):
        simulate_cohort(1, 2, pre, post, seed=5)


def test_pinned_sample():
    s = simulate_sample(0, 2, NoiseModel(), None, seed=3, kind="octagon", radius=10)
    assert s.kind == "octagon"
    v = s.raters.polygons("pre_qa")[0].vertices
    w, h = s.raters.image_size
    assert (w, h) == (32, 32)
    assert np.hypot(*(v - (w / 2, h / 2)).T).max() == pytest.approx(10, abs=1e-9)


def test_noise_free_raters_reach_quantization_floor():
    s = simulate_sample(0, 3, NoiseModel(), None, seed=2)
    curve = mean_curve(s.raters, "pre_qa", 8)
    assert expected_boundary_distance(curve, s.raters, "pre_qa", 8) <= 1.5 / 8


def test_cohorts_from_nearby_seeds_differ():
    model = NoiseModel(0.8)
    a = {dumps_multirater(s.raters) for s in simulate_cohort(4, 2, model, None, seed=0)}
    b = {dumps_multirater(s.raters) for s in simulate_cohort(4, 2, model, None, seed=1)}
    assert not a & b

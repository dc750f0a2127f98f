import math

import numpy as np
import pytest
from hypothesis import settings

from polyconsensus import Polygon, RaterAnnotation, RaterSet

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def ngon(n, radius, center=(0.0, 0.0), phase=0.0):
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    return Polygon(np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)]))


def square(half, center=(0.0, 0.0)):
    cx, cy = center
    return Polygon([(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half)])


def star(points, outer, inner, center=(0.0, 0.0)):
    theta = np.pi * np.arange(2 * points) / points
    r = np.where(np.arange(2 * points) % 2 == 0, outer, inner)
    return Polygon(np.column_stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)]))


def rater_set(polygons, phase="pre_qa", sample_id="s", image_size=None):
    anns = tuple(RaterAnnotation(f"r{k}", phase, p) for k, p in enumerate(polygons))
    return RaterSet(sample_id, anns, image_size)


def radial_offset_circle(radius, offsets, center=(0.0, 0.0), n=1024):
    """Circle whose radius is ``radius + offsets(theta)`` at each vertex angle."""
    theta = 2.0 * np.pi * np.arange(n) / n
    r = radius + offsets(theta)
    return Polygon(np.column_stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)]))


def half_disagreement_raters(radius=20.0, amplitude=2.0, lo=0.25, hi=0.5, n_raters=4, center=(0.0, 0.0)):
    """Raters agree except on the arc fraction [lo, hi], where half sit outside and half inside."""
    polys = []
    for k in range(n_raters):
        sign = 1.0 if k % 2 == 0 else -1.0

        def offsets(theta, sign=sign):
            frac = theta / (2.0 * np.pi)
            return np.where((frac >= lo) & (frac <= hi), sign * amplitude, 0.0)

        polys.append(radial_offset_circle(radius, offsets, center))
    return rater_set(polys)


def angle_fraction(points, center=(0.0, 0.0)):
    a = np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0])
    return np.mod(a, 2.0 * np.pi) / (2.0 * np.pi)


@pytest.fixture
def unit_square():
    return Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture
def triangle345():
    return Polygon([(0, 0), (3, 0), (3, 4)])


SQRT2 = math.sqrt(2.0)


# acceptance lines, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

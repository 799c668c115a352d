import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_vectors
from lbstrip.geometry import Disk, DomainConfig, Rect, StripSpec, check, first_hit, reflect, validate

S2 = math.sqrt(2) / 2


def test_empty_strip_valid(empty_strip):
    assert validate(empty_strip) == []


def test_centered_square_valid():
    assert validate(DomainConfig(obstacles=(Rect(2.0, 0.5, 0.4, 0.4),))) == []


def test_disk_touching_walls_rejected():
    problems = validate(DomainConfig(obstacles=(Disk(2.0, 0.5, 0.6),)))
    assert len(problems) == 1
    assert "obstacle 0" in problems[0] and "touches strip boundary" in problems[0]


def test_overlapping_obstacles_named():
    cfg = DomainConfig(obstacles=(Rect(1.0, 0.5, 0.2, 0.2), Rect(1.3, 0.5, 0.2, 0.2), Rect(3.0, 0.5, 0.1, 0.1)))
    problems = validate(cfg)
    assert problems == ["obstacles 0 and 1: obstacles touch or overlap"]
    with pytest.raises(ValueError, match="obstacles 0 and 1"):
        check(cfg)


def test_bad_reservoirs():
    assert any("rho_left + rho_right" in p for p in validate(DomainConfig(rho_left=0.0, rho_right=0.0)))


def test_strip_spec_rejects_nonpositive():
    with pytest.raises(ValueError):
        StripSpec(0.0, 1.0)


def test_first_hit_examples(empty_strip):
    h = first_hit(empty_strip, (1, 0.5), (0, 1), 10)
    assert h.kind == "elastic" and h.time == pytest.approx(0.5)
    assert h.point == pytest.approx((1, 1))
    assert h.inward_normal == pytest.approx((0, -1))
    h = first_hit(empty_strip, (1, 0.5), (-1, 0), 10)
    assert h.kind == "open_left" and h.time == pytest.approx(1.0) and h.point == pytest.approx((0, 0.5))
    assert first_hit(empty_strip, (1, 0.5), (1, 0), 0.3) is None
    h = first_hit(empty_strip, (1, 0.5), (1, 0), 10)
    assert h.kind == "open_right" and h.time == pytest.approx(3.0)


def test_first_hit_obstacle_faces(square_strip):
    h = first_hit(square_strip, (0.5, 0.5), (1, 0), 10)
    assert h.kind == "elastic" and h.time == pytest.approx(1.1) and h.inward_normal == pytest.approx((-1, 0))
    h = first_hit(square_strip, (2.0, 0.02), (0, 1), 10)
    assert h.time == pytest.approx(0.08) and h.inward_normal == pytest.approx((0, -1))


def test_disk_hit():
    cfg = DomainConfig(obstacles=(Disk(2.0, 0.5, 0.25),))
    h = first_hit(cfg, (0.5, 0.5), (1, 0), 10)
    assert h.time == pytest.approx(1.25) and h.inward_normal == pytest.approx((-1, 0))
    # off-center: normal is radial at the contact point
    h = first_hit(cfg, (0.5, 0.6), (1, 0), 10)
    p = np.array(h.point)
    assert np.linalg.norm(p - (2.0, 0.5)) == pytest.approx(0.25)
    assert np.array(h.inward_normal) == pytest.approx((p - (2.0, 0.5)) / 0.25)


def test_exact_corner_reverses():
    # dyadic coordinates so both face crossings tie exactly
    cfg = DomainConfig(obstacles=(Rect(2.0, 0.5, 0.25, 0.25),))
    h = first_hit(cfg, (1.625, 0.125), (S2, S2), 10)
    assert h.point == pytest.approx((1.75, 0.25))
    assert h.inward_normal == pytest.approx((-S2, -S2))
    assert reflect((S2, S2), h.inward_normal) == pytest.approx((-S2, -S2))


@pytest.mark.parametrize(
    "v, n, expected",
    [((0, -1), (0, 1), (0, 1)), ((S2, -S2), (0, 1), (S2, S2)), ((1, 0), (-S2, S2), (0, 1))],
)
def test_reflect_examples(v, n, expected):
    assert reflect(v, n) == pytest.approx(expected, abs=1e-15)


@given(unit_vectors(), unit_vectors())
def test_reflect_involution_and_norm(v, n):
    w = reflect(v, n)
    assert abs(np.linalg.norm(w) - 1.0) < 1e-12
    assert np.allclose(reflect(w, n), v, atol=1e-12)
    assert abs(np.dot(w, n) + np.dot(v, n)) < 1e-12


SQUARE = DomainConfig(obstacles=(Rect.from_size(2.0, 0.5, 0.8, 0.8),))
origins = st.tuples(st.floats(0.01, 3.99), st.floats(0.01, 0.99))


@settings(max_examples=300)
@given(origins, unit_vectors())
def test_first_hit_consistency(origin, d):
    square_strip = SQUARE
    if square_strip.inside_obstacle(np.array(origin[0]), np.array(origin[1])):
        return
    h = first_hit(square_strip, origin, d, 40.0)
    assert h is not None
    assert np.allclose(h.point, np.array(origin) + h.time * d, atol=1e-9)
    x, y = h.point
    if h.kind == "open_left":
        assert abs(x) < 1e-9
    elif h.kind == "open_right":
        assert abs(x - 4.0) < 1e-9
    else:
        on_wall = abs(y) < 1e-9 or abs(y - 1.0) < 1e-9
        x0, x1, y0, y1 = square_strip.obstacles[0].bounds
        on_box = x0 - 1e-9 <= x <= x1 + 1e-9 and y0 - 1e-9 <= y <= y1 + 1e-9 and (
            min(abs(x - x0), abs(x - x1), abs(y - y0), abs(y - y1)) < 1e-9
        )
        assert on_wall or on_box
        assert abs(np.hypot(*h.inward_normal) - 1.0) < 1e-12
        # the ray arrives against the normal
        assert np.dot(h.inward_normal, d) <= 1e-12

import math

import numpy as np
import pytest

from geometry import (
    MapOrigin,
    Point2,
    Pose2,
    compose,
    inverse,
    inverse_transform_point,
    map_to_utm,
    normalize_angle,
    relative_pose,
    transform_point,
    utm_to_map,
)


def random_pose(rng):
    return Pose2(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-math.pi, math.pi))


class TestNormalizeAngle:

    @pytest.mark.parametrize("angle,expected", [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi, math.pi),
        (2 * math.pi + 0.5, 0.5),
        (-2 * math.pi - 0.5, -0.5),
    ])
    def test_wraps_into_half_open_interval(self, angle, expected):
        assert normalize_angle(angle) == pytest.approx(expected, abs=1e-12)

    def test_result_always_in_range(self):
        rng = np.random.default_rng(3)
        for a in rng.uniform(-100, 100, size=1000):
            wrapped = normalize_angle(a)
            assert -math.pi < wrapped <= math.pi


class TestPose2:

    def test_identity_compose(self):
        p = Pose2(1.5, -2.0, 0.3)
        assert compose(Pose2.identity(), p) == p
        assert compose(p, Pose2.identity()) == p

    def test_quarter_turn_sends_x_to_y(self):
        result = compose(Pose2(1, 0, math.pi / 2), Pose2(1, 0, 0))
        assert result.x == pytest.approx(1.0)
        assert result.y == pytest.approx(1.0)
        assert result.theta == pytest.approx(math.pi / 2)

    def test_pure_translation_inverse(self):
        assert inverse(Pose2(1, 2, 0)) == Pose2(-1, -2, 0)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p, q = random_pose(rng), random_pose(rng)
            expected = Pose2.from_matrix(p.matrix() @ q.matrix())
            got = compose(p, q)
            np.testing.assert_allclose(got.matrix(), expected.matrix(), atol=1e-10)

    def test_inverse_matches_matrix_inverse(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = random_pose(rng)
            np.testing.assert_allclose(inverse(p).matrix(), np.linalg.inv(p.matrix()), atol=1e-12)
            ident = compose(p, inverse(p))
            assert abs(ident.x) < 1e-12 and abs(ident.y) < 1e-12 and abs(ident.theta) < 1e-12

    def test_associativity(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b, c = random_pose(rng), random_pose(rng), random_pose(rng)
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            assert left.x == pytest.approx(right.x, abs=1e-9)
            assert left.y == pytest.approx(right.y, abs=1e-9)
            assert normalize_angle(left.theta - right.theta) == pytest.approx(0.0, abs=1e-9)

    def test_heading_stays_normalised(self):
        p = Pose2(0, 0, 3.0)
        for _ in range(20):
            p = compose(p, Pose2(0.1, 0, 3.0))
            assert abs(p.theta) <= math.pi

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Pose2(float("nan"), 0, 0)
        with pytest.raises(ValueError):
            Point2(0, float("inf"))

    def test_relative_pose(self):
        a, b = Pose2(1, 2, 0.4), Pose2(-3, 5, -1.2)
        rebuilt = compose(a, relative_pose(a, b))
        assert rebuilt.x == pytest.approx(b.x) and rebuilt.y == pytest.approx(b.y)
        assert rebuilt.theta == pytest.approx(b.theta)


class TestPoints:

    def test_transform_identity(self):
        assert transform_point(Pose2.identity(), Point2(3, 4)) == Point2(3, 4)

    def test_transform_half_turn(self):
        q = transform_point(Pose2(0, 0, math.pi), Point2(1, 0))
        assert q.x == pytest.approx(-1.0)
        assert q.y == pytest.approx(0.0, abs=1e-15)

    def test_transform_matches_matrix(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = random_pose(rng)
            q = Point2(*rng.uniform(-10, 10, 2))
            expected = p.matrix() @ np.array([q.x, q.y, 1.0])
            np.testing.assert_allclose(transform_point(p, q).as_array(), expected[:2], atol=1e-10)

    def test_inverse_transform_undoes_transform(self):
        p, q = Pose2(4, -1, 2.1), Point2(0.5, 7)
        back = inverse_transform_point(p, transform_point(p, q))
        assert back.x == pytest.approx(q.x) and back.y == pytest.approx(q.y)


class TestMapOrigin:

    def test_origin_maps_to_offset(self):
        origin = MapOrigin(332000, 6248000)
        assert map_to_utm(Point2(0, 0), origin) == Point2(332000, 6248000)

    def test_offset_addition(self):
        assert map_to_utm(Point2(10, -5), MapOrigin(100, 200)) == Point2(110, 195)

    def test_round_trip(self):
        origin = MapOrigin(332000.25, 6248000.5)
        q = Point2(12.5, -7.25)
        assert utm_to_map(map_to_utm(q, origin), origin) == q

    def test_default_zone(self):
        assert MapOrigin().zone_label == "56S"

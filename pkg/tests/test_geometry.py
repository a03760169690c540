import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsense.errors import DegenerateGeometry, PackingFailure
from fedsense.geometry import (
    Position3D,
    distance,
    elevation_angle,
    sample_radar_position,
    sample_scene,
    sample_uav_positions,
)

finite_coord = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)


def _min_pairwise(points):
    arr = np.array([[p.x, p.y, p.z] for p in points])
    diff = arr[:, None, :] - arr[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return dist.min()


class TestDistance:
    def test_pythagorean_quadruple(self):
        assert distance(Position3D(3, 4, 12), Position3D(0, 0, 0)) == 13.0

    def test_identical_points(self):
        p = Position3D(1.5, -2.0, 7.0)
        assert distance(p, p) == 0.0

    def test_scalar_evaluation(self):
        # oracle: sqrt(50^2 + 150^2 + 80^2) = sqrt(31400)
        expected = math.sqrt(50**2 + 150**2 + 80**2)
        got = distance(Position3D(100, 200, 120), Position3D(50, 50, 40))
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(177.20045146669352, rel=1e-12)

    @given(finite_coord, finite_coord, finite_coord, finite_coord, finite_coord, finite_coord)
    def test_symmetry(self, x1, y1, z1, x2, y2, z2):
        a, b = Position3D(x1, y1, z1), Position3D(x2, y2, z2)
        assert distance(a, b) == distance(b, a)

    @given(st.lists(st.tuples(finite_coord, finite_coord, finite_coord), min_size=3, max_size=3))
    def test_triangle_inequality(self, triple):
        a, b, c = (Position3D(*t) for t in triple)
        assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


class TestElevationAngle:
    def test_forty_five_degrees(self):
        assert elevation_angle(
            Position3D(100, 0, 100), Position3D(0, 0, 0)
        ) == pytest.approx(45.0)

    def test_coplanar_is_zero(self):
        assert elevation_angle(Position3D(50, 20, 40), Position3D(0, 0, 40)) == 0.0

    def test_directly_above(self):
        assert elevation_angle(Position3D(0, 0, 120), Position3D(0, 0, 40)) == 90.0

    def test_directly_below(self):
        assert elevation_angle(Position3D(0, 0, 0), Position3D(0, 0, 40)) == -90.0

    def test_coincident_raises(self):
        p = Position3D(1, 2, 3)
        with pytest.raises(DegenerateGeometry):
            elevation_angle(p, p)

    @given(finite_coord, finite_coord, finite_coord, finite_coord,
           st.floats(-500, 500), st.floats(-500, 500))
    def test_sign_matches_height_difference(self, xu, yu, xr, yr, zu, zr):
        uav, radar = Position3D(xu, yu, zu), Position3D(xr, yr, zr)
        if (xu, yu, zu) == (xr, yr, zr):
            return
        angle = elevation_angle(uav, radar)
        assert -90.0 <= angle <= 90.0
        if zu > zr:
            assert angle > 0
        elif zu < zr:
            assert angle < 0
        else:
            assert angle == 0


class TestRadarPosition:
    def test_degenerate_box(self):
        rng = np.random.default_rng(0)
        p = sample_radar_position((0.0, 0.0), 40.0, rng)
        assert (p.x, p.y, p.z) == (0.0, 0.0, 40.0)

    def test_altitude_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            assert sample_radar_position((5000, 5000), 40.0, rng).z == 40.0

    def test_uniform_mean(self):
        # mean of U[0, 5000] is 2500 with sigma = 5000/sqrt(12)
        rng = np.random.default_rng(2)
        n = 10_000
        xs = np.array([sample_radar_position((5000, 5000), 40, rng).x for _ in range(n)])
        sigma = 5000 / math.sqrt(12)
        assert abs(xs.mean() - 2500) < 3 * sigma / math.sqrt(n)

    def test_negative_altitude_rejected(self):
        with pytest.raises(ValueError):
            sample_radar_position((10, 10), -1.0, np.random.default_rng(0))


class TestUavSampling:
    def test_single_point_any_dmin(self):
        rng = np.random.default_rng(0)
        pts = sample_uav_positions(1, 1e9, (100.0, 100.0, 10.0), rng)
        assert len(pts) == 1
        p = pts[0]
        assert 0 <= p.x <= 100 and 0 <= p.y <= 100 and 0 <= p.z <= 10

    def test_table_scale_hardcore(self):
        rng = np.random.default_rng(3)
        pts = sample_uav_positions(16, 100.0, (5000.0, 5000.0, 120.0), rng)
        assert len(pts) == 16
        assert _min_pairwise(pts) >= 100.0

    def test_unpackable_raises(self):
        rng = np.random.default_rng(4)
        with pytest.raises(PackingFailure):
            sample_uav_positions(2, 7000.0, (5000.0, 5000.0, 120.0), rng)

    def test_retry_exhaustion_raises(self):
        # feasible by volume but extremely unlikely to thin down: tight box
        rng = np.random.default_rng(5)
        with pytest.raises(PackingFailure):
            sample_uav_positions(9, 55.0, (100.0, 100.0, 100.0), rng, retry_budget=5)

    def test_bit_reproducible(self):
        a = sample_uav_positions(8, 50.0, (1000.0, 1000.0, 120.0), np.random.default_rng(7))
        b = sample_uav_positions(8, 50.0, (1000.0, 1000.0, 120.0), np.random.default_rng(7))
        assert a == b

    def test_marginally_uniform(self):
        rng = np.random.default_rng(8)
        xs = []
        for _ in range(400):
            pts = sample_uav_positions(4, 10.0, (1000.0, 1000.0, 120.0), rng)
            xs.extend(p.x for p in pts)
        xs = np.array(xs)
        sigma = 1000 / math.sqrt(12)
        assert abs(xs.mean() - 500) < 4 * sigma / math.sqrt(len(xs))

    @given(st.integers(2, 10), st.floats(5.0, 40.0), st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_hardcore_property(self, n, d_min, seed):
        rng = np.random.default_rng(seed)
        pts = sample_uav_positions(n, d_min, (1000.0, 1000.0, 120.0), rng)
        assert len(pts) == n
        assert _min_pairwise(pts) >= d_min


class TestSampleScene:
    def test_consistent_lengths_and_values(self):
        rng = np.random.default_rng(11)
        scene = sample_scene(8, 100.0, (5000.0, 5000.0, 120.0), 40.0, rng)
        assert scene.num_uavs == 8
        assert len(scene.distances_m) == len(scene.elevations_deg) == 8
        for uav, d, theta in zip(scene.uav_positions, scene.distances_m, scene.elevations_deg):
            assert d == pytest.approx(distance(uav, scene.radar_position))
            assert theta == pytest.approx(elevation_angle(uav, scene.radar_position))
            assert d > 0
            assert -90 <= theta <= 90
        assert scene.radar_position.z == 40.0

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalsplit.errors import NonPositiveDepth, ZeroAxis
from focalsplit.geometry import (
    CameraIntrinsics,
    Pose,
    Rotation,
    Vec3,
    geodesic_distance,
    project_point,
    project_points,
    rotation_from_axis_angle,
    transform_point,
    transform_points,
)
from oracles import matrix_from_quaternion, random_unit_quaternion

unit = st.floats(-1.0, 1.0, allow_nan=False)
quats = st.tuples(unit, unit, unit, unit).filter(lambda q: sum(c * c for c in q) > 1e-3)
points = st.tuples(*(st.floats(-5, 5, allow_nan=False) for _ in range(3)))


def test_origin_maps_to_translation():
    pose = Pose(Rotation((0.3, 0.1, -0.5, 0.2)), Vec3(1, 2, 3))
    assert transform_point((0, 0, 0), pose) == pytest.approx((1, 2, 3), abs=1e-15)


def test_quarter_turn_about_z():
    pose = Pose(rotation_from_axis_angle((0, 0, 1), math.pi / 2), Vec3(0, 0, 0))
    assert transform_point((1, 0, 0), pose) == pytest.approx((0, 1, 0), abs=1e-15)


def test_transform_matches_matrix_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        q = random_unit_quaternion(rng)
        t = rng.normal(size=3)
        pose = Pose(Rotation(q), Vec3(*t))
        p = (0.2, -0.1, 0.3)
        expected = matrix_from_quaternion(q) @ np.array(p) + t
        np.testing.assert_allclose(transform_point(p, pose), expected, atol=1e-12)
        np.testing.assert_allclose(transform_points([p], pose)[0], expected, atol=1e-12)


def test_project_on_axis_hits_principal_point(camera):
    assert project_point((0, 0, 1.5), camera) == (320.0, 240.0)


def test_project_manual_arithmetic(camera):
    # 500 * 0.5 / 2 + 320
    assert project_point((0.5, 0, 2.0), camera) == pytest.approx((445.0, 240.0), abs=1e-12)


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-10])
def test_project_rejects_nonpositive_depth(camera, z):
    with pytest.raises(NonPositiveDepth):
        project_point((0, 0, z), camera)


def test_vectorized_projection_bit_identical(camera):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(50, 3)) + [0, 0, 4]
    uv = project_points(pts, camera)
    for p, row in zip(pts, uv):
        assert tuple(row) == project_point(p, camera)


def test_geodesic_examples():
    ident = Rotation.identity()
    assert geodesic_distance(ident, ident) == 0.0
    q = Rotation((0.5, 0.5, -0.5, 0.5))
    assert geodesic_distance(q, Rotation(tuple(-c for c in q.q))) == 0.0
    rz = rotation_from_axis_angle((0, 0, 1), math.pi / 2)
    assert geodesic_distance(ident, rz) == pytest.approx(math.pi / 2, abs=1e-15)


def test_axis_angle_zero_and_half_turn():
    assert rotation_from_axis_angle((3, 1, 2), 0.0) == Rotation.identity()
    assert rotation_from_axis_angle((0, 0, 0), 0.0) == Rotation.identity()
    assert rotation_from_axis_angle((0, 0, 1), math.pi).q == pytest.approx((0, 0, 0, 1), abs=1e-15)


def test_axis_angle_zero_axis_raises():
    with pytest.raises(ZeroAxis):
        rotation_from_axis_angle((0, 0, 1e-13), 0.3)


def test_axis_angle_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(100):
        axis = rng.normal(size=3)
        angle = rng.uniform(-2 * math.pi, 2 * math.pi)
        r = rotation_from_axis_angle(axis, angle)
        # distance is the angle folded into [0, pi]
        folded = abs(math.remainder(angle, 2 * math.pi))
        assert geodesic_distance(Rotation.identity(), r) == pytest.approx(folded, abs=1e-12)


def test_canonical_sign():
    r = Rotation((-0.5, 0.5, 0.5, 0.5))
    assert r.q == (0.5, -0.5, -0.5, -0.5)
    assert Rotation((0.0, 0.0, -1.0, 0.0)).q == (0.0, 0.0, 1.0, 0.0)


def test_unit_quaternion_reconstruction_is_noop():
    r = Rotation((0.1, 0.2, 0.3, 0.4))
    assert Rotation(r.q).q == r.q


@given(quats, quats)
def test_composition_stays_unit(a, b):
    q = (Rotation(a) * Rotation(b)).q
    assert abs(math.sqrt(sum(c * c for c in q)) - 1.0) <= 1e-9
    assert q[0] >= 0


@settings(max_examples=200)
@given(quats, quats, quats)
def test_geodesic_triangle_inequality(a, b, c):
    ra, rb, rc = Rotation(a), Rotation(b), Rotation(c)
    d = geodesic_distance
    assert d(ra, rc) <= d(ra, rb) + d(rb, rc) + 1e-9
    assert 0.0 <= d(ra, rb) <= math.pi
    assert d(ra, rb) == pytest.approx(d(rb, ra), abs=1e-12)


@given(quats, points, points, points)
def test_transform_preserves_distances(q, p1, p2, t):
    pose = Pose(Rotation(q), Vec3(*t))
    a, b = transform_point(p1, pose), transform_point(p2, pose)
    assert math.dist(a, b) == pytest.approx(math.dist(p1, p2), abs=1e-9)


@given(
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.floats(0.1, 10),
    st.floats(50, 5000),
    st.floats(0.05, 20),
)
def test_projection_invariant_under_focal_depth_coscaling(x, y, tz, f, alpha):
    a = project_point((x, y, tz), CameraIntrinsics(f, 320, 240, 640, 480))
    b = project_point((x, y, alpha * tz), CameraIntrinsics(alpha * f, 320, 240, 640, 480))
    assert b == pytest.approx(a, rel=1e-12, abs=1e-9)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1, 1, 2, 2)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1, 1, 0, 2)
    assert CameraIntrinsics.centered(800, 640, 480).diagonal == 800.0

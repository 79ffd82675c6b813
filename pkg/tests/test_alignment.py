import math

import numpy as np
import pytest

from focalsplit.alignment import (
    Correspondence,
    GaussNewtonProvider,
    SilhouetteFDProvider,
    correspondences_from_state,
    increment_to_update,
    observability,
    project_with_increment,
    reprojection_jacobian,
    silhouette_loss,
)
from focalsplit.errors import (
    DegenerateNormalEquations,
    FlatLossRegion,
    InsufficientCorrespondences,
)
from focalsplit.geometry import CameraIntrinsics, PixelPoint, Rotation, Vec3, rotation_from_axis_angle
from focalsplit.meshes import cube, l_bracket, quad
from focalsplit.refiner import RefinementState, apply_update
from focalsplit.renderer import render_silhouette
from oracles import central_difference

CAM = CameraIntrinsics(650.0, 320.0, 240.0, 640, 480)
GT = RefinementState(rotation_from_axis_angle((0.3, -1.0, 0.5), 0.9), 0.03, -0.02, 650.0, 1.0)


def random_state(rng, k=1.0):
    return RefinementState(
        rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, math.pi)),
        rng.uniform(-0.1, 0.1),
        rng.uniform(-0.1, 0.1),
        rng.uniform(200, 2000),
        k,
    )


def relative_column_error(J, J_ref):
    scale = np.maximum(np.abs(J_ref).max(axis=0), 1e-12)
    return float((np.abs(J - J_ref) / scale).max())


@pytest.mark.parametrize("free_depth", [False, True])
def test_jacobian_matches_central_differences(free_depth):
    rng = np.random.default_rng(7)
    pts = cube().vertices
    n = 7 if free_depth else 6
    for _ in range(20):
        s = random_state(rng)
        _, J = reprojection_jacobian(s, pts, CAM, free_depth=free_depth)
        J_fd = central_difference(
            lambda d: project_with_increment(s, pts, CAM, d).reshape(-1), np.zeros(n), 1e-6
        )
        assert relative_column_error(J, J_fd) < 1e-5


def test_ground_truth_is_zero_update():
    provider = GaussNewtonProvider(correspondences_from_state(cube(), GT, CAM))
    dq = provider.propose_update(GT, None, None, CAM)
    assert dq.norm() <= 1e-8
    assert provider.discrepancy(GT, None, None, CAM) <= 1e-9


def test_single_step_recovers_lateral_offset():
    provider = GaussNewtonProvider(correspondences_from_state(cube(), GT, CAM))
    start = RefinementState(GT.rotation, GT.x + 0.02, GT.y, GT.f, GT.k)
    out = apply_update(start, provider.propose_update(start, None, None, CAM))
    assert out.x == pytest.approx(GT.x, abs=1e-6)
    assert out.y == pytest.approx(GT.y, abs=1e-6)
    assert out.f == pytest.approx(GT.f, rel=1e-6)


def test_requires_four_correspondences():
    corr = correspondences_from_state(cube(), GT, CAM)
    with pytest.raises(InsufficientCorrespondences):
        GaussNewtonProvider(corr[:3])
    GaussNewtonProvider(corr[:4])


def test_degenerate_correspondences():
    c = Correspondence(Vec3(0.0, 0.0, 0.0), PixelPoint(320.0, 240.0))
    provider = GaussNewtonProvider([c] * 4)
    with pytest.raises(DegenerateNormalEquations):
        provider.propose_update(GT, None, None, CAM)


def test_increment_conversion_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(200):
        s = random_state(rng)
        delta = rng.normal(size=6) * [0.3, 0.3, 0.3, 0.05, 0.05, 0.4]
        out = apply_update(s, increment_to_update(s, delta))
        assert out.x == pytest.approx(s.x + delta[3], rel=1e-10, abs=1e-12)
        assert out.y == pytest.approx(s.y + delta[4], rel=1e-10, abs=1e-12)
        assert out.f == pytest.approx(s.f * math.exp(delta[5]), rel=1e-10)


def test_planar_quad_depth_focal_rank_deficient():
    s = RefinementState(Rotation.identity(), 0.05, -0.02, 600.0, 1.0)
    report = observability(s, quad().vertices, CAM)
    assert report.depth_focal_condition > 1e8
    assert report.free_min_eigen_ratio < 1e-12


def test_pinned_cube_focal_observable():
    report = observability(GT, cube().vertices, CAM)
    assert report.pinned_focal_ratio > 1e-6
    assert report.pinned_min_eigen_ratio > 0
    assert report.depth_focal_condition < 1e8


def test_fd_at_optimum_is_small():
    mesh = l_bracket()
    obs = render_silhouette(mesh, GT.pose, CAM)
    provider = SilhouetteFDProvider()
    dq = provider.propose_update(GT, obs, mesh, CAM)
    assert np.all(np.abs(dq.as_array()) <= provider.steps)


def test_fd_focal_sign_points_toward_larger_focal():
    mesh = cube()
    obs = render_silhouette(mesh, GT.pose, CAM.with_focal(GT.f * 1.1))
    # direct loss evaluation: the larger focal length matches the observation better
    bigger = RefinementState(GT.rotation, GT.x, GT.y, GT.f * 1.1, GT.k)
    assert silhouette_loss(bigger, obs, mesh, CAM) < silhouette_loss(GT, obs, mesh, CAM)
    dq = SilhouetteFDProvider().propose_update(GT, obs, mesh, CAM)
    assert dq.v_f > 0


def test_fd_flat_region_on_disjoint_silhouettes():
    mesh = cube()
    far = RefinementState(GT.rotation, 0.8, 0.0, GT.f, GT.k)
    obs = render_silhouette(mesh, GT.pose, CAM)
    with pytest.raises(FlatLossRegion):
        SilhouetteFDProvider().propose_update(far, obs, mesh, CAM)


def test_fd_rejects_bad_steps():
    with pytest.raises(ValueError):
        SilhouetteFDProvider([0.1, 0.1, 0.1, 0.5, 0.5, 0.0])
    with pytest.raises(ValueError):
        SilhouetteFDProvider([0.1, 0.1])


def test_providers_are_deterministic():
    mesh = cube()
    obs = render_silhouette(mesh, GT.pose, CAM)
    start = RefinementState(GT.rotation, GT.x + 0.01, GT.y, GT.f * 1.05, GT.k)
    fd = SilhouetteFDProvider()
    assert fd.propose_update(start, obs, mesh, CAM) == fd.propose_update(start, obs, mesh, CAM)
    gn = GaussNewtonProvider(correspondences_from_state(mesh, GT, CAM))
    assert gn.propose_update(start, obs, mesh, CAM) == gn.propose_update(start, obs, mesh, CAM)

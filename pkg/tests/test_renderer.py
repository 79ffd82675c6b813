import math

import numpy as np
import pytest

from focalsplit.errors import DimensionMismatch, EmptyMesh, VertexBehindCamera
from focalsplit.geometry import CameraIntrinsics, Pose, Rotation, Vec3, rotation_from_axis_angle
from focalsplit.meshes import Mesh, cube, icosphere, l_bracket, quad
from focalsplit.renderer import (
    SilhouetteImage,
    project_mesh,
    projected_bbox,
    render_silhouette,
    silhouette_iou,
)
from oracles import brute_force_mask, brute_force_mask_grid, iou_by_counting, project_vertex

SMALL = CameraIntrinsics(60.0, 32.0, 24.0, 64, 48)


def pose(tz=1.0, x=0.0, y=0.0, rot=None):
    return Pose(rot or Rotation.identity(), Vec3(x, y, tz))


def test_full_frustum_quad_sets_every_pixel():
    mesh = quad(3.0, 2.0)
    img = render_silhouette(mesh, pose(), SMALL)
    expected = brute_force_mask(project_mesh(mesh, pose(), SMALL), mesh.triangles, 64, 48)
    assert expected.all()
    assert np.array_equal(img.mask, expected)


def test_offscreen_mesh_is_empty(camera):
    img = render_silhouette(cube(), pose(x=50.0), camera)
    assert img.area == 0


def test_vertex_behind_camera(camera):
    with pytest.raises(VertexBehindCamera):
        render_silhouette(cube(0.3), pose(tz=0.1), camera)
    with pytest.raises(VertexBehindCamera):
        projected_bbox(cube(0.3), pose(tz=-1.0), camera)


def test_empty_mesh(camera):
    with pytest.raises(EmptyMesh):
        render_silhouette(Mesh(np.zeros((0, 3)), np.zeros((0, 3))), pose(), camera)
    with pytest.raises(EmptyMesh):
        render_silhouette(Mesh([[0, 0, 0]], np.zeros((0, 3))), pose(), camera)
    with pytest.raises(EmptyMesh):
        projected_bbox(Mesh(np.zeros((0, 3)), np.zeros((0, 3))), pose(), camera)


def test_degenerate_triangle_is_skipped():
    mesh = Mesh([[0, 0, 0], [0.1, 0.1, 0], [0.2, 0.2, 0]], [(0, 1, 2)])
    assert render_silhouette(mesh, pose(), SMALL).area == 0


def _img(bits):
    return SilhouetteImage(2, 2, np.array(bits, dtype=bool).reshape(2, 2))


def test_iou_examples():
    a = _img([1, 1, 0, 0])
    b = _img([0, 1, 1, 0])
    assert silhouette_iou(a, a) == 1.0
    assert silhouette_iou(a, _img([0, 0, 1, 1])) == 0.0
    assert silhouette_iou(a, b) == pytest.approx(1 / 3)
    assert silhouette_iou(a, b) == iou_by_counting(a.mask, b.mask)
    assert silhouette_iou(_img([0] * 4), _img([0] * 4)) == 1.0
    with pytest.raises(DimensionMismatch):
        silhouette_iou(a, SilhouetteImage(4, 1, np.zeros(4)))


def test_bbox_single_vertex_on_axis(camera):
    box = projected_bbox(Mesh([[0, 0, 0]], np.zeros((0, 3))), pose(tz=1.0), camera)
    assert (box.u_min, box.v_min, box.u_max, box.v_max) == (320.0, 240.0, 320.0, 240.0)


def test_bbox_symmetric_pair(camera):
    mesh = Mesh([[-0.1, -0.2, 0.0], [0.1, 0.2, 0.0]], np.zeros((0, 3)))
    assert projected_bbox(mesh, pose(tz=2.0), camera).center == pytest.approx((320.0, 240.0))


def test_bbox_matches_per_vertex_oracle(camera):
    rng = np.random.default_rng(8)
    for _ in range(10):
        verts = rng.uniform(-0.2, 0.2, size=(12, 3))
        rot = rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, math.pi))
        p = pose(tz=1.5, x=0.05, y=-0.1, rot=rot)
        box = projected_bbox(Mesh(verts, np.zeros((0, 3))), p, camera)
        uv = np.array(
            [project_vertex(v, rot.q, p.translation, camera.f, camera.cx, camera.cy) for v in verts]
        )
        np.testing.assert_allclose(
            [box.u_min, box.v_min, box.u_max, box.v_max],
            [*uv.min(axis=0), *uv.max(axis=0)],
            atol=1e-9,
        )


def random_small_mesh(rng, max_tris=40):
    n_tris = int(rng.integers(1, max_tris + 1))
    verts = rng.uniform(-0.3, 0.3, size=(n_tris * 2 + 1, 3))
    tris = rng.integers(0, len(verts), size=(n_tris, 3))
    return Mesh(verts, tris)


def test_rasterizer_matches_scalar_oracle_on_tiny_images():
    cam = CameraIntrinsics(40.0, 16.0, 12.0, 32, 24)
    rng = np.random.default_rng(21)
    for _ in range(5):
        mesh = random_small_mesh(rng, 8)
        rot = rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, math.pi))
        p = pose(tz=1.0, rot=rot)
        uv = project_mesh(mesh, p, cam)
        expected = brute_force_mask(uv, mesh.triangles, cam.width, cam.height)
        assert np.array_equal(render_silhouette(mesh, p, cam).mask, expected)


def test_rasterizer_matches_grid_oracle():
    cam = CameraIntrinsics(110.0, 64.0, 48.0, 128, 96)
    rng = np.random.default_rng(4)
    for _ in range(20):
        mesh = random_small_mesh(rng)
        rot = rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, math.pi))
        p = pose(tz=1.0, x=rng.uniform(-0.1, 0.1), rot=rot)
        uv = project_mesh(mesh, p, cam)
        expected = brute_force_mask_grid(uv, mesh.triangles, cam.width, cam.height)
        assert np.array_equal(render_silhouette(mesh, p, cam).mask, expected)


def test_edge_exactly_through_pixel_centers_is_inclusive():
    # triangle with a vertical edge at u = 10.5 exactly
    cam = CameraIntrinsics(10.0, 10.5, 0.0, 20, 20)
    mesh = Mesh([[0, 0, 0], [0, 2, 0], [1, 0, 0]], [(0, 1, 2)])
    img = render_silhouette(mesh, pose(), cam)
    assert img.mask[0, 10]
    assert not img.mask[0, 9]


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.25, 2.0])
def test_planar_coscaling_is_bit_exact(camera, alpha):
    mesh = quad()
    base = render_silhouette(mesh, pose(tz=1.3, x=0.07, y=-0.04), camera)
    scaled = render_silhouette(
        mesh, pose(tz=alpha * 1.3, x=0.07, y=-0.04), camera.with_focal(alpha * camera.f)
    )
    assert base.area > 0
    assert np.array_equal(base.mask, scaled.mask)


def test_translation_equivariance_in_x(camera):
    mesh = icosphere()
    rot = rotation_from_axis_angle((1, 1, 0), 0.4)
    base = render_silhouette(mesh, pose(tz=1.2, rot=rot), camera)
    for delta in (0.01, 0.03, -0.05):
        moved = render_silhouette(mesh, pose(tz=1.2, x=delta, rot=rot), camera)
        du = moved.centroid()[0] - base.centroid()[0]
        assert du == pytest.approx(camera.f * delta / 1.2, abs=0.5)
        assert moved.centroid()[1] == pytest.approx(base.centroid()[1], abs=0.5)


def test_render_is_deterministic(camera):
    mesh = l_bracket()
    p = pose(tz=1.1, rot=rotation_from_axis_angle((0.3, 1, 0.2), 0.9))
    assert render_silhouette(mesh, p, camera) == render_silhouette(mesh, p, camera)
    assert render_silhouette(mesh, p, camera).area > 0


def test_snapped_projection_within_half_grid_step_of_oracle(camera):
    rng = np.random.default_rng(31)
    mesh = icosphere()
    for _ in range(10):
        rot = rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, math.pi))
        p = pose(tz=float(rng.uniform(0.8, 3.0)), x=0.05, rot=rot)
        uv = project_mesh(mesh, p, camera)
        ref = np.array(
            [project_vertex(v, rot.q, p.translation, camera.f, camera.cx, camera.cy) for v in mesh.vertices]
        )
        assert np.abs(uv - ref).max() <= 1 / 512 + 1e-9
        assert np.array_equal(uv * 256, np.round(uv * 256))

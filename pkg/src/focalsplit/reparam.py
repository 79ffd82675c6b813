"""Depth pinning: move a scene to ``t_z = k`` and compensate through the focal length.

Re-annotation sets the depth to a constant ``k`` and rescales the focal
length by ``k / t_z``. The lateral translation ``(x, y)`` is left untouched:
the object-origin projection is ``f x / t_z``, and with ``f_new = f k / t_z``
it becomes ``f_new x / k = f x / t_z``, so keeping ``x, y`` is exactly what
preserves it. Points off the reference depth move slightly (the
weak-perspective gap); :func:`reannotation_residual` measures that gap.

:func:`restore_metric` is the inverse: given a true depth ``d`` from an
external source (e.g. an AR ray cast), it lifts a pinned-depth solution back
to metric space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import AlreadyReannotated, NonPositiveDepth, NonPositiveK, NotReannotated
from .geometry import CameraIntrinsics, Pose, project_point, project_points, transform_points
from .meshes import Mesh

DEFAULT_K = 1.0


@dataclass(frozen=True)
class AnnotatedScene:
    mesh_path: str
    intrinsics: CameraIntrinsics
    pose: Pose
    reparam_k: Optional[float] = None

    def __post_init__(self):
        if not self.pose.tz > 0:
            raise NonPositiveDepth(f"scene depth t_z = {self.pose.tz} must be positive")
        if self.reparam_k is not None and self.pose.tz != self.reparam_k:
            raise ValueError(
                f"re-annotated scene must have t_z == k ({self.pose.tz} != {self.reparam_k})"
            )

    @property
    def is_reannotated(self) -> bool:
        return self.reparam_k is not None


@dataclass(frozen=True)
class ReannotationReport:
    max_center_error: float
    max_vertex_error: float
    depth_extent_ratio: float


def reannotate(scene: AnnotatedScene, k: float = DEFAULT_K) -> AnnotatedScene:
    k = float(k)
    tz = scene.pose.tz
    if not tz > 0:
        raise NonPositiveDepth(f"t_z = {tz} must be positive")
    if not (math.isfinite(k) and k > 0):
        raise NonPositiveK(f"k = {k} must be positive")
    if scene.is_reannotated:
        raise AlreadyReannotated(f"scene is already pinned to k = {scene.reparam_k}")
    f_new = scene.intrinsics.f * k / tz
    return replace(
        scene,
        intrinsics=scene.intrinsics.with_focal(f_new),
        pose=scene.pose.with_translation(z=k),
        reparam_k=k,
    )


def restore_metric(scene: AnnotatedScene, depth: float) -> AnnotatedScene:
    depth = float(depth)
    if not scene.is_reannotated:
        raise NotReannotated("restore_metric needs a re-annotated scene")
    if not (math.isfinite(depth) and depth > 0):
        raise NonPositiveDepth(f"depth {depth} must be positive")
    k = scene.reparam_k
    f = scene.intrinsics.f * depth / k
    return replace(
        scene,
        intrinsics=scene.intrinsics.with_focal(f),
        pose=scene.pose.with_translation(z=depth),
        reparam_k=None,
    )


def reannotation_residual(
    original: AnnotatedScene, reannotated: AnnotatedScene, mesh: Mesh
) -> ReannotationReport:
    """Pixel displacement caused by re-annotation, at the origin and per vertex."""
    mesh.require_vertices()
    c0 = project_point(original.pose.translation, original.intrinsics)
    c1 = project_point(reannotated.pose.translation, reannotated.intrinsics)
    center_err = math.hypot(c1.u - c0.u, c1.v - c0.v)

    p0 = transform_points(mesh.vertices, original.pose)
    p1 = transform_points(mesh.vertices, reannotated.pose)
    d = project_points(p1, reannotated.intrinsics) - project_points(p0, original.intrinsics)
    vertex_err = float(np.sqrt((d**2).sum(axis=1)).max())
    extent = float(p0[:, 2].max() - p0[:, 2].min()) / original.pose.tz
    return ReannotationReport(center_err, vertex_err, extent)

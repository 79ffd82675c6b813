"""Silhouette rasterizer standing in for the render step of render-and-compare.

Projected vertices are snapped to a 1/256-pixel grid before rasterization,
as fixed-point hardware rasterizers do. With snapped coordinates the edge
functions below are evaluated exactly in float64 (for coordinates up to
roughly 1e5 px), which makes coverage independent of evaluation order and
lets (f, t_z) co-scaled renders of planar content agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, VertexBehindCamera
from .geometry import DEPTH_EPS, CameraIntrinsics, Pose, project_points, transform_points
from .meshes import Mesh

SUBPIXEL = 256.0


@dataclass(frozen=True, eq=False)
class SilhouetteImage:
    """Binary occupancy mask, shape ``(height, width)``, row-major."""

    width: int
    height: int
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).reshape(self.height, self.width)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    def __eq__(self, other):
        if not isinstance(other, SilhouetteImage):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.mask, other.mask
        )

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    def centroid(self) -> tuple[float, float]:
        rows, cols = np.nonzero(self.mask)
        return float(cols.mean() + 0.5), float(rows.mean() + 0.5)


@dataclass(frozen=True)
class BBox2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min


def snap(uv: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(uv, dtype=float) * SUBPIXEL) / SUBPIXEL


def _camera_points(mesh: Mesh, pose: Pose) -> np.ndarray:
    p_cam = transform_points(mesh.vertices, pose)
    z = p_cam[:, 2]
    bad = np.nonzero(~(z > DEPTH_EPS))[0]
    if bad.size:
        raise VertexBehindCamera(
            f"vertex {int(bad[0])} has camera depth {z[bad[0]]:.6g} (no near-plane clipping)"
        )
    return p_cam


def project_mesh(mesh: Mesh, pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Snapped ``(N, 2)`` pixel coordinates of every vertex."""
    mesh.require_vertices()
    return snap(project_points(_camera_points(mesh, pose), intr))


def rasterize_triangles(uv: np.ndarray, triangles: np.ndarray, width: int, height: int) -> np.ndarray:
    """Union of triangle footprints over pixel centers (edge-inclusive)."""
    mask = np.zeros((height, width), dtype=bool)
    for tri in triangles:
        a, b, c = uv[tri[0]], uv[tri[1]], uv[tri[2]]
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area == 0.0:
            continue
        if area < 0.0:
            b, c = c, b
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        # pixel centers col + 0.5 within [lo, hi]
        c0 = max(int(np.ceil(lo[0] - 0.5)), 0)
        c1 = min(int(np.floor(hi[0] - 0.5)), width - 1)
        r0 = max(int(np.ceil(lo[1] - 0.5)), 0)
        r1 = min(int(np.floor(hi[1] - 0.5)), height - 1)
        if c0 > c1 or r0 > r1:
            continue
        px = np.arange(c0, c1 + 1, dtype=float)[None, :] + 0.5
        py = np.arange(r0, r1 + 1, dtype=float)[:, None] + 0.5
        inside = np.ones((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
        for p, q in ((a, b), (b, c), (c, a)):
            inside &= (q[0] - p[0]) * (py - p[1]) - (q[1] - p[1]) * (px - p[0]) >= 0.0
        mask[r0 : r1 + 1, c0 : c1 + 1] |= inside
    return mask


def render_silhouette(mesh: Mesh, pose: Pose, intr: CameraIntrinsics) -> SilhouetteImage:
    mesh.require_triangles()
    uv = project_mesh(mesh, pose, intr)
    mask = rasterize_triangles(uv, mesh.triangles, intr.width, intr.height)
    return SilhouetteImage(intr.width, intr.height, mask)


def silhouette_iou(a: SilhouetteImage, b: SilhouetteImage) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")
    union = np.count_nonzero(a.mask | b.mask)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.mask & b.mask) / union


def projected_bbox(mesh: Mesh, pose: Pose, intr: CameraIntrinsics) -> BBox2D:
    """Tight bounds of the (unsnapped) projected vertices, not clipped to the image."""
    mesh.require_vertices()
    uv = project_points(_camera_points(mesh, pose), intr)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return BBox2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

"""Pinhole projection and rigid-body math.

Conventions
-----------
* Quaternions are ``(w, x, y, z)``, stored canonically with ``w >= 0``.
* A pose maps object coordinates to camera coordinates: ``X = R p + t``.
* Pixel ``(row r, col c)`` has its center at continuous ``(c + 0.5, r + 0.5)``;
  the image origin is the top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import NonPositiveDepth, ZeroAxis

DEPTH_EPS = 1e-9
# Normalization tolerance; smaller deviations are left alone so that
# re-constructing an already unit quaternion is a bit-exact no-op.
_NORM_TOL = 1e-12


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


class PixelPoint(NamedTuple):
    u: float
    v: float


def _canonical(q: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    w, x, y, z = (float(c) for c in q)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if not math.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot build a rotation from quaternion {q!r}")
    if abs(n - 1.0) > _NORM_TOL:
        w, x, y, z = w / n, x / n, y / n, z / n
    flip = w < 0.0
    if w == 0.0:
        for c in (x, y, z):
            if c != 0.0:
                flip = c < 0.0
                break
    if flip:
        w, x, y, z = -w, -x, -y, -z
    # avoid -0.0 so serialized output is stable
    return (w + 0.0, x + 0.0, y + 0.0, z + 0.0)


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion rotation in canonical (``w >= 0``) form."""

    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "q", _canonical(tuple(self.q)))

    @classmethod
    def identity(cls) -> Rotation:
        return cls()

    @property
    def w(self) -> float:
        return self.q[0]

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __mul__(self, other: Rotation) -> Rotation:
        """Hamilton product: ``(a * b)`` applies ``b`` first, then ``a``."""
        aw, ax, ay, az = self.q
        bw, bx, by, bz = other.q
        return Rotation(
            (
                aw * bw - ax * bx - ay * by - az * bz,
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
            )
        )

    def inverse(self) -> Rotation:
        w, x, y, z = self.q
        return Rotation((w, -x, -y, -z))

    def rotate(self, p) -> Vec3:
        """Rotate a single vector using the quaternion sandwich product."""
        w, qx, qy, qz = self.q
        px, py, pz = (float(c) for c in p)
        # t = 2 q_vec x p ; p' = p + w t + q_vec x t
        tx = 2.0 * (qy * pz - qz * py)
        ty = 2.0 * (qz * px - qx * pz)
        tz = 2.0 * (qx * py - qy * px)
        return Vec3(
            px + w * tx + (qy * tz - qz * ty),
            py + w * ty + (qz * tx - qx * tz),
            pz + w * tz + (qx * ty - qy * tx),
        )

    def as_axis_angle(self) -> np.ndarray:
        """Rotation vector ``axis * angle`` with angle in ``[0, pi]``."""
        w, x, y, z = self.q
        s = math.sqrt(x * x + y * y + z * z)
        if s < 1e-300:
            return np.zeros(3)
        angle = 2.0 * math.atan2(s, w)
        return np.array([x, y, z]) * (angle / s)


def rotation_from_axis_angle(axis, angle: float) -> Rotation:
    """Exponential map: rotation by ``angle`` radians about ``axis``."""
    angle = float(angle)
    if angle == 0.0:
        return Rotation.identity()
    ax, ay, az = (float(c) for c in axis)
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-12:
        raise ZeroAxis(f"axis {tuple(axis)!r} has zero length for angle {angle}")
    s = math.sin(0.5 * angle) / n
    return Rotation((math.cos(0.5 * angle), ax * s, ay * s, az * s))


def rotation_from_vector(rotvec) -> Rotation:
    """Exponential map of a rotation vector (direction = axis, norm = angle)."""
    rx, ry, rz = (float(c) for c in rotvec)
    theta = math.sqrt(rx * rx + ry * ry + rz * rz)
    if theta < 1e-8:
        # second-order Taylor expansion keeps tiny increments accurate
        half = 0.5 - theta * theta / 48.0
        return Rotation((1.0 - theta * theta / 8.0, rx * half, ry * half, rz * half))
    return rotation_from_axis_angle((rx, ry, rz), theta)


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Angle in ``[0, pi]`` of the relative rotation ``a^-1 b``."""
    aw, ax, ay, az = a.q
    bw, bx, by, bz = b.q
    # relative quaternion a^-1 b, unnormalized; its vector part is exactly 0 when a == b
    w = aw * bw + ax * bx + ay * by + az * bz
    x = aw * bx - bw * ax - (ay * bz - az * by)
    y = aw * by - bw * ay - (az * bx - ax * bz)
    z = aw * bz - bw * az - (ax * by - ay * bx)
    # atan2 form stays accurate near 0 and pi, unlike acos(|w|)
    return 2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w))


@dataclass(frozen=True)
class Pose:
    """Object-to-camera rigid transform; ``translation.z`` is the depth t_z."""

    rotation: Rotation
    translation: Vec3

    def __post_init__(self):
        object.__setattr__(self, "translation", Vec3(*(float(c) for c in self.translation)))

    @property
    def tz(self) -> float:
        return self.translation.z

    def with_translation(self, x=None, y=None, z=None) -> Pose:
        t = self.translation
        return replace(
            self,
            translation=Vec3(
                t.x if x is None else x, t.y if y is None else y, t.z if z is None else z
            ),
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def centered(cls, f: float, width: int, height: int) -> CameraIntrinsics:
        return cls(f, width / 2.0, height / 2.0, width, height)

    def with_focal(self, f: float) -> CameraIntrinsics:
        return replace(self, f=float(f))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


def transform_point(p, pose: Pose) -> Vec3:
    r = pose.rotation.rotate(p)
    t = pose.translation
    return Vec3(r.x + t.x, r.y + t.y, r.z + t.z)


def project_point(p_cam, intr: CameraIntrinsics) -> PixelPoint:
    x, y, z = (float(c) for c in p_cam)
    if not z > DEPTH_EPS:
        raise NonPositiveDepth(f"point depth {z} is not in front of the camera")
    return PixelPoint(intr.f * x / z + intr.cx, intr.f * y / z + intr.cy)


def transform_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Vectorized ``R p + t`` for an ``(N, 3)`` array."""
    return np.asarray(points, dtype=float) @ pose.rotation.as_matrix().T + np.asarray(
        pose.translation
    )


def project_points(p_cam: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Vectorized pinhole projection of ``(N, 3)`` camera points to ``(N, 2)`` pixels.

    Uses the same operation order as :func:`project_point`, so results agree
    bit for bit.
    """
    p_cam = np.asarray(p_cam, dtype=float)
    z = p_cam[:, 2]
    if np.any(~(z > DEPTH_EPS)):
        raise NonPositiveDepth(f"minimum depth {z.min()} is not in front of the camera")
    u = intr.f * p_cam[:, 0] / z + intr.cx
    v = intr.f * p_cam[:, 1] / z + intr.cy
    return np.stack([u, v], axis=1)

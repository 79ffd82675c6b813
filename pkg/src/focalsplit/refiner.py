"""Iterative render-and-compare refinement with depth pinned to ``k``.

The state holds rotation, lateral translation ``(x, y)`` and focal length
``f``; depth is the constant ``k`` for the whole run. Each iteration asks an
alignment provider for an :class:`UpdateVector` and applies it with
:func:`apply_update`::

    f'  = exp(v_f) * f
    x'  = (v_x / f') * k + x
    y'  = (v_y / f') * k + y
    R'  = exp(rot_update) * R

``f`` is updated first because the translation updates divide by the *new*
focal length. With ``v_f = 0`` the object-origin projection moves by exactly
``(v_x, v_y)`` pixels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    DegenerateBBox,
    DimensionMismatch,
    NonFiniteUpdate,
    NonPositiveK,
    RefinementError,
)
from .geometry import CameraIntrinsics, Pose, Rotation, Vec3, rotation_from_vector
from .meshes import Mesh
from .renderer import BBox2D, SilhouetteImage

if TYPE_CHECKING:
    from .alignment import AlignmentProvider

F_MIN = 25.0
F_MAX = 25000.0
MAX_HALVINGS = 5


@dataclass(frozen=True)
class RefinementState:
    rotation: Rotation
    x: float
    y: float
    f: float
    k: float
    clamped: bool = False  # set when the update that produced this state hit an f bound

    def __post_init__(self):
        if not self.k > 0:
            raise NonPositiveK(f"k = {self.k} must be positive")

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, Vec3(self.x, self.y, self.k))

    def intrinsics(self, camera: CameraIntrinsics) -> CameraIntrinsics:
        return camera.with_focal(self.f)

    @classmethod
    def from_pose(cls, pose: Pose, f: float) -> RefinementState:
        t = pose.translation
        return cls(pose.rotation, t.x, t.y, float(f), t.z)


@dataclass(frozen=True)
class UpdateVector:
    v_x: float = 0.0
    v_y: float = 0.0
    v_f: float = 0.0
    rot_update: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> UpdateVector:
        """From ``[rx, ry, rz, v_x, v_y, v_f]``, the order used by the solvers."""
        a = [float(c) for c in a]
        return cls(a[3], a[4], a[5], (a[0], a[1], a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([*self.rot_update, self.v_x, self.v_y, self.v_f], dtype=float)

    def scaled(self, s: float) -> UpdateVector:
        return UpdateVector.from_array(self.as_array() * s)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class RefinementConfig:
    max_iterations: int = 50
    stop_update_norm: float = 1e-6
    stop_loss: float = 1e-4
    f_min: float = F_MIN
    f_max: float = F_MAX

    def __post_init__(self):
        if self.max_iterations < 1 or self.stop_update_norm <= 0 or self.stop_loss < 0:
            raise ValueError("refinement thresholds must be positive")
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")


class Termination(str, enum.Enum):
    CONVERGED_UPDATE = "converged-by-update"
    CONVERGED_LOSS = "converged-by-loss"
    MAX_ITERATIONS = "max-iterations"
    # every damped retry of the last proposal increased the discrepancy
    STALLED = "stalled"


@dataclass(frozen=True)
class TrajectoryStep:
    iteration: int
    state: RefinementState
    loss: float


@dataclass
class RefinementTrajectory:
    steps: list[TrajectoryStep] = field(default_factory=list)
    terminated_by: Termination | None = None

    @property
    def final(self) -> RefinementState:
        return self.steps[-1].state

    @property
    def final_loss(self) -> float:
        return self.steps[-1].loss

    def __len__(self):
        return len(self.steps)


def apply_update(
    state: RefinementState, dq: UpdateVector, f_min: float = F_MIN, f_max: float = F_MAX
) -> RefinementState:
    if not dq.is_finite():
        raise NonFiniteUpdate(f"non-finite update {dq}")
    f_new = math.exp(dq.v_f) * state.f
    clamped = not f_min <= f_new <= f_max
    if clamped:
        f_new = min(max(f_new, f_min), f_max)
    x_new = dq.v_x / f_new * state.k + state.x
    y_new = dq.v_y / f_new * state.k + state.y
    rotation = rotation_from_vector(dq.rot_update) * state.rotation
    return RefinementState(rotation, x_new, y_new, f_new, state.k, clamped)


def update_towards(current: RefinementState, target: RefinementState) -> UpdateVector:
    """The update that :func:`apply_update` maps ``current`` onto ``target``."""
    if target.k != current.k:
        raise ValueError("states are pinned to different k")
    v_f = math.log(target.f / current.f)
    f_next = math.exp(v_f) * current.f
    rel = target.rotation * current.rotation.inverse()
    return UpdateVector(
        (target.x - current.x) * f_next / current.k,
        (target.y - current.y) * f_next / current.k,
        v_f,
        tuple(float(c) for c in rel.as_axis_angle()),
    )


def init_state(bbox: BBox2D, intr_guess: CameraIntrinsics, k: float = 1.0) -> RefinementState:
    """Back-project the box center to depth ``k`` with ``f`` set to the image diagonal."""
    if not (bbox.width > 0 and bbox.height > 0):
        raise DegenerateBBox(f"bounding box {bbox} has zero extent")
    if not k > 0:
        raise NonPositiveK(f"k = {k} must be positive")
    f0 = intr_guess.diagonal
    uc, vc = bbox.center
    return RefinementState(
        Rotation.identity(),
        (uc - intr_guess.cx) * k / f0,
        (vc - intr_guess.cy) * k / f0,
        f0,
        float(k),
    )


def refine(
    init: RefinementState,
    observation: SilhouetteImage,
    mesh: Mesh,
    provider: AlignmentProvider,
    camera: CameraIntrinsics,
    cfg: RefinementConfig | None = None,
) -> RefinementTrajectory:
    """Run the render-and-compare loop.

    ``camera`` supplies the principal point and image size; its focal length
    is ignored in favour of the refined ``state.f``. Only accepted states are
    recorded, so the recorded discrepancy never increases: a proposal that
    raises it is retried at half the size up to five times, after which the
    run stops as :attr:`Termination.STALLED`.

    Any exception from the provider or renderer is re-raised as
    :class:`RefinementError` carrying the iteration index.
    """
    cfg = cfg or RefinementConfig()
    if (observation.width, observation.height) != (camera.width, camera.height):
        raise DimensionMismatch("observation size differs from the camera image size")

    def loss_of(state, it):
        try:
            return float(provider.discrepancy(state, observation, mesh, camera))
        except Exception as exc:
            raise RefinementError(it, exc) from exc

    state = init
    loss = loss_of(state, 0)
    traj = RefinementTrajectory([TrajectoryStep(0, state, loss)])
    for it in range(cfg.max_iterations):
        try:
            dq = provider.propose_update(state, observation, mesh, camera)
            if not dq.is_finite():
                raise NonFiniteUpdate(f"provider returned {dq}")
        except Exception as exc:
            raise RefinementError(it, exc) from exc
        if dq.norm() < cfg.stop_update_norm:
            traj.terminated_by = Termination.CONVERGED_UPDATE
            return traj
        accepted = None
        for j in range(MAX_HALVINGS + 1):
            try:
                cand = apply_update(state, dq.scaled(0.5**j), cfg.f_min, cfg.f_max)
            except Exception as exc:
                raise RefinementError(it, exc) from exc
            cand_loss = loss_of(cand, it)
            if cand_loss <= loss:
                accepted = cand, cand_loss
                break
        if accepted is None:
            traj.terminated_by = Termination.STALLED
            return traj
        state, loss = accepted
        traj.steps.append(TrajectoryStep(it + 1, state, loss))
        if loss <= cfg.stop_loss:
            traj.terminated_by = Termination.CONVERGED_LOSS
            return traj
    traj.terminated_by = Termination.MAX_ITERATIONS
    return traj

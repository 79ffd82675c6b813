"""Alignment providers: analytic stand-ins for the learned update network.

A provider maps ``(state, observation, mesh, camera)`` to an
:class:`~focalsplit.refiner.UpdateVector` in the same parameterization the
update rule consumes, so :func:`~focalsplit.refiner.apply_update` is on the
path of every step.

Two providers ship here:

* :class:`GaussNewtonProvider` uses known 2D-3D correspondences and takes a
  damped Gauss-Newton step on the reprojection error.
* :class:`SilhouetteFDProvider` is derivative free: it probes ``1 - IoU``
  between rendered and observed silhouettes with central differences.

Solver parameter vectors are ordered ``[rx, ry, rz, dx, dy, dlogf]`` (plus
``dlogtz`` when depth is freed for diagnostics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateNormalEquations,
    FlatLossRegion,
    InsufficientCorrespondences,
    NonPositiveDepth,
)
from .geometry import DEPTH_EPS, CameraIntrinsics, PixelPoint, Vec3, rotation_from_vector
from .meshes import Mesh
from .refiner import F_MAX, F_MIN, RefinementState, UpdateVector, apply_update
from .renderer import SilhouetteImage, render_silhouette, silhouette_iou

LAMBDA_INIT = 1e-6
LAMBDA_GROWTH = 10.0
MAX_DAMPING_TRIES = 14
MAX_SCALED_CONDITION = 1e12


@dataclass(frozen=True)
class Correspondence:
    model_point: Vec3
    observed_pixel: PixelPoint


class AlignmentProvider:
    """Interface for anything that plays the role of the alignment network.

    Subclasses implement :meth:`propose_update`. :meth:`discrepancy` is the
    quantity the refinement loop keeps non-increasing; the default is the
    silhouette loss ``1 - IoU``.
    """

    def propose_update(
        self,
        state: RefinementState,
        observation: SilhouetteImage,
        mesh: Mesh,
        camera: CameraIntrinsics,
    ) -> UpdateVector:
        raise NotImplementedError

    def discrepancy(
        self,
        state: RefinementState,
        observation: SilhouetteImage,
        mesh: Mesh,
        camera: CameraIntrinsics,
    ) -> float:
        return silhouette_loss(state, observation, mesh, camera)


def silhouette_loss(
    state: RefinementState, observation: SilhouetteImage, mesh: Mesh, camera: CameraIntrinsics
) -> float:
    rendered = render_silhouette(mesh, state.pose, state.intrinsics(camera))
    return 1.0 - silhouette_iou(rendered, observation)


# -- reprojection model ------------------------------------------------------


def _cross_columns(q: np.ndarray) -> np.ndarray:
    """``d(R' p)/d(omega)`` at zero for left perturbation: columns ``e_j x q``, shape (N, 3, 3)."""
    out = np.zeros((len(q), 3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        out[:, :, j] = np.cross(e, q)
    return out


def reprojection_jacobian(
    state: RefinementState,
    points: np.ndarray,
    camera: CameraIntrinsics,
    free_depth: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Projected pixels ``(N, 2)`` and the Jacobian ``(2N, 6|7)`` at zero increment.

    Rows are interleaved ``u0, v0, u1, v1, ...``. Columns follow the solver
    order; with ``free_depth`` a ``dlogtz`` column is appended.
    """
    points = np.asarray(points, dtype=float)
    q = points @ state.rotation.as_matrix().T
    P = q + np.array([state.x, state.y, state.k])
    z = P[:, 2]
    if np.any(~(z > DEPTH_EPS)):
        raise NonPositiveDepth("correspondence point behind the camera")
    f = state.f
    uv = np.stack([f * P[:, 0] / z + camera.cx, f * P[:, 1] / z + camera.cy], axis=1)

    # d(u, v)/dP, shape (N, 2, 3)
    dproj = np.zeros((len(P), 2, 3))
    dproj[:, 0, 0] = f / z
    dproj[:, 1, 1] = f / z
    dproj[:, 0, 2] = -f * P[:, 0] / z**2
    dproj[:, 1, 2] = -f * P[:, 1] / z**2

    ncol = 7 if free_depth else 6
    J = np.zeros((len(P), 2, ncol))
    J[:, :, 0:3] = dproj @ _cross_columns(q)
    J[:, :, 3] = dproj[:, :, 0]
    J[:, :, 4] = dproj[:, :, 1]
    J[:, 0, 5] = f * P[:, 0] / z
    J[:, 1, 5] = f * P[:, 1] / z
    if free_depth:
        J[:, :, 6] = dproj[:, :, 2] * state.k
    return uv, J.reshape(-1, ncol)


def project_with_increment(
    state: RefinementState,
    points: np.ndarray,
    camera: CameraIntrinsics,
    delta: Sequence[float],
) -> np.ndarray:
    """Exact projection after applying a solver increment; used for FD checks and line search."""
    delta = np.asarray(delta, dtype=float)
    rot = rotation_from_vector(delta[:3]) * state.rotation
    tz = state.k * math.exp(delta[6]) if len(delta) > 6 else state.k
    f = state.f * math.exp(delta[5])
    P = np.asarray(points, dtype=float) @ rot.as_matrix().T + np.array(
        [state.x + delta[3], state.y + delta[4], tz]
    )
    z = P[:, 2]
    if np.any(~(z > DEPTH_EPS)):
        raise NonPositiveDepth("correspondence point behind the camera")
    return np.stack([f * P[:, 0] / z + camera.cx, f * P[:, 1] / z + camera.cy], axis=1)


def to_update_parameterization(J: np.ndarray, state: RefinementState) -> np.ndarray:
    """Rescale the ``dx, dy`` columns to the pixel-valued ``v_x, v_y`` of the update rule.

    At zero increment ``dx = v_x * k / f``.
    """
    J = np.array(J, dtype=float)
    J[:, 3:5] *= state.k / state.f
    return J


def increment_to_update(state: RefinementState, delta: np.ndarray) -> UpdateVector:
    """Convert a solver increment into the update-rule parameters.

    ``apply_update`` then lands exactly on ``(x + dx, y + dy, f * exp(dlogf))``
    provided the focal length stays inside the clamp bounds.
    """
    f_next = math.exp(delta[5]) * state.f
    return UpdateVector(
        delta[3] * f_next / state.k,
        delta[4] * f_next / state.k,
        float(delta[5]),
        (float(delta[0]), float(delta[1]), float(delta[2])),
    )


def normal_matrix(J: np.ndarray) -> np.ndarray:
    return J.T @ J


def schur_information(H: np.ndarray, index: int) -> float:
    """Curvature along one parameter after minimizing over all others: ``1 / (H^-1)_ii``."""
    others = [i for i in range(len(H)) if i != index]
    h_ii = H[index, index]
    if not others:
        return float(h_ii)
    A = H[np.ix_(others, others)]
    b = H[others, index]
    return float(h_ii - b @ np.linalg.solve(A, b))


@dataclass(frozen=True)
class ObservabilityReport:
    """Conditioning of focal length against depth for one configuration.

    ``depth_focal_condition`` is the condition number of the 2x2 normal
    matrix over ``(log t_z, log f)`` when depth is treated as free.
    ``pinned_focal_ratio`` is the focal-direction curvature of the pinned
    system (other parameters marginalized) divided by its largest eigenvalue,
    in the update-rule parameterization.
    """

    depth_focal_condition: float
    free_min_eigen_ratio: float
    pinned_focal_ratio: float
    pinned_min_eigen_ratio: float


def observability(
    state: RefinementState, points: np.ndarray, camera: CameraIntrinsics
) -> ObservabilityReport:
    _, J_free = reprojection_jacobian(state, points, camera, free_depth=True)
    H_free = normal_matrix(J_free)
    block = H_free[np.ix_([6, 5], [6, 5])]
    ev = np.linalg.eigvalsh(block)
    cond = math.inf if ev[0] <= 0 else float(ev[-1] / ev[0])
    ev_free = np.linalg.eigvalsh(H_free)

    J_pin = to_update_parameterization(J_free[:, :6], state)
    H_pin = normal_matrix(J_pin)
    ev_pin = np.linalg.eigvalsh(H_pin)
    return ObservabilityReport(
        depth_focal_condition=cond,
        free_min_eigen_ratio=float(max(ev_free[0], 0.0) / ev_free[-1]),
        pinned_focal_ratio=schur_information(H_pin, 5) / float(ev_pin[-1]),
        pinned_min_eigen_ratio=float(max(ev_pin[0], 0.0) / ev_pin[-1]),
    )


# -- providers ---------------------------------------------------------------


class GaussNewtonProvider(AlignmentProvider):
    """Damped Gauss-Newton on reprojection error over known correspondences.

    Damping is Levenberg-Marquardt style: ``(H + lambda diag(H)) delta = -g``
    starting at ``lambda = 1e-6`` and growing tenfold whenever the trial step
    does not reduce the squared error. The loop discrepancy for this provider
    is the reprojection RMSE in pixels.
    """

    def __init__(self, correspondences: Sequence[Correspondence]):
        if len(correspondences) < 4:
            raise InsufficientCorrespondences(
                f"need at least 4 correspondences, got {len(correspondences)}"
            )
        self.points = np.array([c.model_point for c in correspondences], dtype=float)
        self.observed = np.array([c.observed_pixel for c in correspondences], dtype=float)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.observed))):
            raise InsufficientCorrespondences("correspondences must be finite")
        self.points.setflags(write=False)
        self.observed.setflags(write=False)

    def _sq_error(self, state: RefinementState, camera: CameraIntrinsics) -> float:
        try:
            uv = project_with_increment(state, self.points, camera, np.zeros(6))
        except NonPositiveDepth:
            return math.inf
        return float(((uv - self.observed) ** 2).sum())

    def reprojection_rmse(self, state: RefinementState, camera: CameraIntrinsics) -> float:
        return math.sqrt(self._sq_error(state, camera) / len(self.points))

    def discrepancy(self, state, observation, mesh, camera) -> float:
        return self.reprojection_rmse(state, camera)

    def normal_equations(self, state: RefinementState, camera: CameraIntrinsics):
        uv, J = reprojection_jacobian(state, self.points, camera)
        r = (uv - self.observed).reshape(-1)
        return J.T @ J, J.T @ r, float(r @ r)

    def propose_update(self, state, observation, mesh, camera) -> UpdateVector:
        H, g, cost = self.normal_equations(state, camera)
        d = np.sqrt(np.diag(H))
        if np.any(d == 0) or np.linalg.cond(H / np.outer(d, d)) > MAX_SCALED_CONDITION:
            raise DegenerateNormalEquations("reprojection system is rank deficient")
        diag = np.diag(np.diag(H))
        lam = LAMBDA_INIT
        best = None
        for _ in range(MAX_DAMPING_TRIES):
            delta = np.linalg.solve(H + lam * diag, -g)
            rot_norm = float(np.linalg.norm(delta[:3]))
            if rot_norm > math.pi:
                delta *= math.pi / rot_norm
            dq = increment_to_update(state, delta)
            best = dq
            trial = apply_update(state, dq, F_MIN, F_MAX)
            if self._sq_error(trial, camera) < cost:
                return dq
            lam *= LAMBDA_GROWTH
        return best


DEFAULT_FD_STEPS = (0.01, 0.01, 0.01, 0.5, 0.5, 0.02)


class SilhouetteFDProvider(AlignmentProvider):
    """Central-difference descent on ``1 - IoU`` in update-rule coordinates.

    Each coordinate gets a secant Newton step ``-g / c`` from the probed slope
    ``g`` and curvature ``c``, limited to ``max_step`` probe widths. Where the
    curvature is not positive the step falls back to one probe width downhill.
    """

    def __init__(self, step_sizes: Sequence[float] = DEFAULT_FD_STEPS, max_step: float = 4.0):
        steps = np.asarray(step_sizes, dtype=float)
        if steps.shape != (6,) or np.any(~(steps > 0)):
            raise ValueError("need six positive finite-difference steps [rx, ry, rz, v_x, v_y, v_f]")
        self.steps = steps
        self.steps.setflags(write=False)
        self.max_step = float(max_step)

    def _loss(self, state, delta, observation, mesh, camera) -> float:
        probe = apply_update(state, UpdateVector.from_array(delta), F_MIN, F_MAX)
        return silhouette_loss(probe, observation, mesh, camera)

    def probe(self, state, observation, mesh, camera):
        """Loss at the state and at ``+/- h`` along each coordinate: ``(L0, Lplus, Lminus)``."""
        l0 = self._loss(state, np.zeros(6), observation, mesh, camera)
        lp = np.empty(6)
        lm = np.empty(6)
        for i, h in enumerate(self.steps):
            e = np.zeros(6)
            e[i] = h
            lp[i] = self._loss(state, e, observation, mesh, camera)
            lm[i] = self._loss(state, -e, observation, mesh, camera)
        return l0, lp, lm

    def propose_update(self, state, observation, mesh, camera) -> UpdateVector:
        l0, lp, lm = self.probe(state, observation, mesh, camera)
        if np.all(lp == l0) and np.all(lm == l0):
            if l0 == 0.0:
                return UpdateVector()
            raise FlatLossRegion(f"all probes returned loss {l0:.6g}; enlarge steps")
        h = self.steps
        grad = (lp - lm) / (2 * h)
        curv = (lp - 2 * l0 + lm) / h**2
        step = np.zeros(6)
        newton = curv > 0
        step[newton] = -grad[newton] / curv[newton]
        fallback = ~newton & (grad != 0)
        step[fallback] = -np.sign(grad[fallback]) * h[fallback]
        step = np.clip(step, -self.max_step * h, self.max_step * h)
        return UpdateVector.from_array(step)


def correspondences_from_state(
    mesh: Mesh, state: RefinementState, camera: CameraIntrinsics
) -> list[Correspondence]:
    """Mesh vertices paired with their exact projections under ``state``."""
    uv = project_with_increment(state, mesh.vertices, camera, np.zeros(6))
    return [
        Correspondence(Vec3(*map(float, p)), PixelPoint(float(a), float(b)))
        for p, (a, b) in zip(mesh.vertices, uv)
    ]

"""Synthetic scenes, evaluation metrics, the (f, t_z) ambiguity sweep and the benchmark.

Randomness: every draw comes from numpy's PCG64 generator
(``numpy.random.default_rng``). A scene uses ``default_rng(seed)``; the
benchmark gives trial ``i`` the seed ``base_seed + i`` and perturbs its
initial state with ``default_rng([trial_seed, 1])``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .alignment import (
    Correspondence,
    GaussNewtonProvider,
    SilhouetteFDProvider,
    correspondences_from_state,
)
from .errors import FocalSplitError, KMismatch, NotReannotated, SamplingExhausted
from .geometry import (
    DEPTH_EPS,
    CameraIntrinsics,
    Pose,
    Rotation,
    Vec3,
    geodesic_distance,
    project_points,
    rotation_from_axis_angle,
    transform_points,
)
from .meshes import Mesh
from .refiner import (
    RefinementConfig,
    RefinementState,
    RefinementTrajectory,
    refine,
)
from .renderer import SilhouetteImage, render_silhouette, silhouette_iou
from .reparam import AnnotatedScene, reannotate

MAX_RETRIES = 100

SUCCESS_FOCAL = 0.01
SUCCESS_ROTATION = math.radians(0.5)
SUCCESS_REPROJ = 0.5


@dataclass(frozen=True)
class SceneSamplerConfig:
    tz_range: tuple[float, float] = (1.0, 4.0)
    f_range: tuple[float, float] = (300.0, 1500.0)
    xy_offset: float = 0.2  # fraction of the half-frustum at the sampled depth
    width: int = 640
    height: int = 480
    seed: int = 0

    def __post_init__(self):
        for name in ("tz_range", "f_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be positive and ordered, got {(lo, hi)}")
        if self.xy_offset < 0 or self.width < 1 or self.height < 1:
            raise ValueError("invalid sampler configuration")


class SyntheticScene(NamedTuple):
    scene: AnnotatedScene
    observation: SilhouetteImage
    correspondences: list[Correspondence]
    metric_scene: AnnotatedScene


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniform over SO(3) (Shoemake's subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1 - u1), math.sqrt(u1)
    return Rotation(
        (
            b * math.cos(2 * math.pi * u3),
            a * math.sin(2 * math.pi * u2),
            a * math.cos(2 * math.pi * u2),
            b * math.sin(2 * math.pi * u3),
        )
    )


def _in_front(mesh: Mesh, pose: Pose) -> bool:
    return bool(np.all(transform_points(mesh.vertices, pose)[:, 2] > DEPTH_EPS))


def generate_scene(
    cfg: SceneSamplerConfig,
    mesh: Mesh,
    k: float | None = None,
    rotation: Rotation | None = None,
) -> SyntheticScene:
    """Sample a metric scene; with ``k`` given, pin it to depth ``k``.

    The observation and correspondences are produced from the returned
    ``scene`` (the pinned one when ``k`` is set), so a refinement at depth
    ``k`` can reproduce them exactly. ``rotation`` fixes the object rotation
    instead of sampling it (e.g. identity for a fronto-parallel quad).
    """
    mesh.require_triangles()
    rng = np.random.default_rng(cfg.seed)
    for _ in range(MAX_RETRIES):
        tz = rng.uniform(*cfg.tz_range)
        f = rng.uniform(*cfg.f_range)
        rot = random_rotation(rng) if rotation is None else rotation
        fx, fy = rng.uniform(-cfg.xy_offset, cfg.xy_offset, size=2)
        x = fx * (cfg.width / 2.0) * tz / f
        y = fy * (cfg.height / 2.0) * tz / f
        pose = Pose(rot, Vec3(float(x), float(y), float(tz)))
        if not _in_front(mesh, pose):
            continue
        intr = CameraIntrinsics.centered(float(f), cfg.width, cfg.height)
        metric = AnnotatedScene(f"builtin:{mesh.name}", intr, pose)
        scene = metric if k is None else reannotate(metric, k)
        if not _in_front(mesh, scene.pose):
            continue
        obs = render_silhouette(mesh, scene.pose, scene.intrinsics)
        state = RefinementState.from_pose(scene.pose, scene.intrinsics.f)
        corr = correspondences_from_state(mesh, state, scene.intrinsics)
        return SyntheticScene(scene, obs, corr, metric)
    raise SamplingExhausted(f"could not place mesh {mesh.name!r} after {MAX_RETRIES} draws")


# -- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    focal_rel_error: float
    rotation_error: float
    xy_error: float
    reproj_rmse: float
    iterations: int = 0
    terminated_by: str = "none"

    @property
    def success(self) -> bool:
        return (
            self.focal_rel_error < SUCCESS_FOCAL
            and self.rotation_error < SUCCESS_ROTATION
            and self.reproj_rmse < SUCCESS_REPROJ
        )


def vertex_rmse(
    mesh: Mesh, pose_a: Pose, intr_a: CameraIntrinsics, pose_b: Pose, intr_b: CameraIntrinsics
) -> float:
    uv_a = project_points(transform_points(mesh.vertices, pose_a), intr_a)
    uv_b = project_points(transform_points(mesh.vertices, pose_b), intr_b)
    return float(np.sqrt(((uv_a - uv_b) ** 2).sum(axis=1).mean()))


def evaluate(
    final: RefinementState,
    gt: AnnotatedScene,
    mesh: Mesh,
    trajectory: RefinementTrajectory | None = None,
) -> EvalRecord:
    if not gt.is_reannotated:
        raise NotReannotated("ground truth must be pinned to the same k as the estimate")
    if gt.reparam_k != final.k:
        raise KMismatch(f"estimate k = {final.k}, ground truth k = {gt.reparam_k}")
    mesh.require_vertices()
    f_true = gt.intrinsics.f
    t = gt.pose.translation
    iterations = len(trajectory) - 1 if trajectory is not None else 0
    terminated = trajectory.terminated_by.value if trajectory and trajectory.terminated_by else "none"
    return EvalRecord(
        focal_rel_error=abs(final.f - f_true) / f_true,
        rotation_error=geodesic_distance(final.rotation, gt.pose.rotation),
        xy_error=math.hypot(final.x - t.x, final.y - t.y),
        reproj_rmse=vertex_rmse(
            mesh, final.pose, final.intrinsics(gt.intrinsics), gt.pose, gt.intrinsics
        ),
        iterations=iterations,
        terminated_by=terminated,
    )


# -- ambiguity ---------------------------------------------------------------


@dataclass(frozen=True)
class AmbiguityCurve:
    alphas: tuple[float, ...]
    loss_joint_manifold: tuple[float, ...]
    loss_decomposed: tuple[float, ...]
    curvature_ratio: float


def _second_difference(alphas: np.ndarray, losses: np.ndarray, i: int) -> float:
    """Non-uniform central second difference at index ``i``."""
    h0 = alphas[i] - alphas[i - 1]
    h1 = alphas[i + 1] - alphas[i]
    return 2.0 * (h0 * losses[i + 1] - (h0 + h1) * losses[i] + h1 * losses[i - 1]) / (
        h0 * h1 * (h0 + h1)
    )


def ambiguity_sweep(scene: AnnotatedScene, mesh: Mesh, alphas: Sequence[float]) -> AmbiguityCurve:
    """Silhouette loss along the co-scaling manifold versus the focal-only direction.

    ``loss_joint_manifold[i]`` renders with ``(a f, a t_z)``;
    ``loss_decomposed[i]`` with ``(a f, t_z)``. Both compare against the
    unperturbed render with ``1 - IoU``. ``curvature_ratio`` divides the
    decomposed curve's second difference at ``a = 1`` by the joint one and is
    ``inf`` when the joint second difference is below 1e-12 (``nan`` when 1.0
    has no sampled neighbour on both sides).
    """
    alphas = tuple(sorted(set(float(a) for a in alphas)))
    if any(not a > 0 for a in alphas) or 1.0 not in alphas:
        raise ValueError("alphas must be positive and include 1.0")
    ref = render_silhouette(mesh, scene.pose, scene.intrinsics)
    f, tz = scene.intrinsics.f, scene.pose.tz
    joint, decomposed = [], []
    for a in alphas:
        r_joint = render_silhouette(
            mesh, scene.pose.with_translation(z=a * tz), scene.intrinsics.with_focal(a * f)
        )
        r_dec = render_silhouette(mesh, scene.pose, scene.intrinsics.with_focal(a * f))
        joint.append(1.0 - silhouette_iou(ref, r_joint))
        decomposed.append(1.0 - silhouette_iou(ref, r_dec))
    i = alphas.index(1.0)
    ratio = math.nan
    if 0 < i < len(alphas) - 1:
        a = np.array(alphas)
        d_joint = _second_difference(a, np.array(joint), i)
        d_dec = _second_difference(a, np.array(decomposed), i)
        ratio = math.inf if abs(d_joint) < 1e-12 else float(d_dec / d_joint)
    return AmbiguityCurve(alphas, tuple(joint), tuple(decomposed), ratio)


# -- benchmark ---------------------------------------------------------------


def perturb_state(
    gt: RefinementState,
    rng: np.random.Generator,
    max_rotation: float = math.radians(15.0),
    max_xy_fraction: float = 0.1,
    max_focal_factor: float = 2.0,
) -> RefinementState:
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_rotation)
    r = gt.k * max_xy_fraction * math.sqrt(rng.random())
    phi = rng.uniform(0.0, 2 * math.pi)
    factor = max_focal_factor ** rng.uniform(-1.0, 1.0)
    return RefinementState(
        rotation_from_axis_angle(axis, angle) * gt.rotation,
        gt.x + r * math.cos(phi),
        gt.y + r * math.sin(phi),
        gt.f * factor,
        gt.k,
    )


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    mesh: str
    record: EvalRecord | None
    error: str | None = None


@dataclass
class BenchmarkResult:
    trials: list[TrialResult]
    summary: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def failures(self) -> list[TrialResult]:
        return [t for t in self.trials if t.record is None]

    @property
    def successes(self) -> int:
        return sum(1 for t in self.trials if t.record is not None and t.record.success)


METRICS = ("focal_rel_error", "rotation_error", "xy_error", "reproj_rmse", "iterations")


def summarize(records: Sequence[EvalRecord]) -> dict[str, dict[str, float]]:
    out = {}
    for name in METRICS:
        vals = np.array([getattr(r, name) for r in records], dtype=float)
        if vals.size == 0:
            out[name] = {"median": math.nan, "p90": math.nan, "max": math.nan}
            continue
        out[name] = {
            "median": float(np.median(vals)),
            "p90": float(np.percentile(vals, 90)),
            "max": float(vals.max()),
        }
    return out


@dataclass(frozen=True)
class _TrialSpec:
    trial: int
    seed: int
    mesh: Mesh
    sampler: SceneSamplerConfig
    provider: str
    k: float
    perturb: bool
    refine_cfg: RefinementConfig


def _make_provider(name: str, corr: list[Correspondence]):
    if name == "gn":
        return GaussNewtonProvider(corr)
    if name == "fd":
        return SilhouetteFDProvider()
    raise ValueError(f"unknown provider {name!r}; expected 'gn' or 'fd'")


def run_trial(spec: _TrialSpec) -> TrialResult:
    try:
        syn = generate_scene(replace(spec.sampler, seed=spec.seed), spec.mesh, k=spec.k)
        gt = RefinementState.from_pose(syn.scene.pose, syn.scene.intrinsics.f)
        init = gt
        if spec.perturb:
            init = perturb_state(gt, np.random.default_rng([spec.seed, 1]))
        provider = _make_provider(spec.provider, syn.correspondences)
        traj = refine(
            init, syn.observation, spec.mesh, provider, syn.scene.intrinsics, spec.refine_cfg
        )
        record = evaluate(traj.final, syn.scene, spec.mesh, traj)
        return TrialResult(spec.trial, spec.seed, spec.mesh.name, record)
    except FocalSplitError as exc:
        return TrialResult(spec.trial, spec.seed, spec.mesh.name, None, f"{type(exc).__name__}: {exc}")


def run_benchmark(
    sampler: SceneSamplerConfig,
    meshes: Sequence[Mesh],
    provider: str = "gn",
    trials: int = 100,
    seed: int = 0,
    k: float = 1.0,
    perturb: bool = True,
    refine_cfg: RefinementConfig | None = None,
    workers: int = 1,
) -> BenchmarkResult:
    """Run seeded trials cycling through ``meshes``; results are in trial order.

    Trial ``i`` uses mesh ``meshes[i % len(meshes)]`` and seed ``seed + i``.
    Per-trial failures are captured, not raised. With ``workers > 1`` trials
    run in a process pool; output is identical to the serial run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not meshes:
        raise ValueError("need at least one mesh")
    if provider not in ("gn", "fd"):
        raise ValueError(f"unknown provider {provider!r}; expected 'gn' or 'fd'")
    cfg = refine_cfg or RefinementConfig()
    specs = [
        _TrialSpec(i, seed + i, meshes[i % len(meshes)], sampler, provider, k, perturb, cfg)
        for i in range(trials)
    ]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
            results = list(pool.map(run_trial, specs))
    else:
        results = [run_trial(s) for s in specs]
    summary = summarize([r.record for r in results if r.record is not None])
    return BenchmarkResult(results, summary)


def default_workers() -> int:
    """Worker count from ``FOCALSPLIT_THREADS`` (0 or unset: all cores)."""
    raw = os.environ.get("FOCALSPLIT_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("FOCALSPLIT_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)

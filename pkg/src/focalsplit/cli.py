"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 input/parse error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import io
from .alignment import GaussNewtonProvider, SilhouetteFDProvider, correspondences_from_state
from .errors import FocalSplitError, InputError
from .geometry import Rotation
from .meshes import BUILTIN_MESHES
from .refiner import RefinementConfig, RefinementState, init_state, refine
from .renderer import projected_bbox, render_silhouette
from .reparam import DEFAULT_K, AnnotatedScene, reannotate, reannotation_residual, restore_metric

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
BENCH_MAX_ERROR_RATE = 0.05

log = logging.getLogger("focalsplit")


def _positive(kind):
    def parse(text):
        val = kind(text)
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    return parse


def _alphas(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("alphas must be positive")
    return vals


def _scene_mesh(scene: AnnotatedScene, annotation_path):
    return io.resolve_mesh(scene.mesh_path, annotation_path)


# -- subcommands -------------------------------------------------------------


def cmd_reannotate(args) -> int:
    scene = io.load_annotation(args.input)
    out = reannotate(scene, args.k)
    text = io.dumps_json(io.annotation_to_dict(out))
    if not args.no_report:
        report = reannotation_residual(scene, out, _scene_mesh(scene, args.input))
        print(f"max_center_error_px  {report.max_center_error:.6g}")
        print(f"max_vertex_error_px  {report.max_vertex_error:.6g}")
        print(f"depth_extent_ratio   {report.depth_extent_ratio:.6g}")
    io.write_outputs({args.out: text})
    return EXIT_OK


def cmd_restore_metric(args) -> int:
    scene = io.load_annotation(args.input)
    out = restore_metric(scene, args.depth)
    io.write_outputs({args.out: io.dumps_json(io.annotation_to_dict(out))})
    return EXIT_OK


def _fit_inputs(args):
    """Ground-truth pinned scene, its mesh, observation and correspondences."""
    if args.synthetic:
        mesh = io.load_mesh(args.mesh)
        syn = ex.generate_scene(ex.SceneSamplerConfig(seed=args.seed), mesh, k=args.k)
        return syn.scene, mesh, syn.observation, syn.correspondences
    if args.annotation is None:
        raise InputError("fit needs an annotation file or --synthetic")
    scene = io.load_annotation(args.annotation)
    mesh = _scene_mesh(scene, args.annotation)
    if not scene.is_reannotated:
        scene = reannotate(scene, args.k)
    obs = render_silhouette(mesh, scene.pose, scene.intrinsics)
    gt = RefinementState.from_pose(scene.pose, scene.intrinsics.f)
    return scene, mesh, obs, correspondences_from_state(mesh, gt, scene.intrinsics)


def cmd_fit(args) -> int:
    scene, mesh, obs, corr = _fit_inputs(args)
    camera = scene.intrinsics
    gt = RefinementState.from_pose(scene.pose, camera.f)
    if args.init == "gt":
        init = gt
    elif args.init == "bbox":
        init = init_state(projected_bbox(mesh, scene.pose, camera), camera, scene.reparam_k)
    else:
        init = ex.perturb_state(gt, np.random.default_rng([args.seed, 1]))
    provider = GaussNewtonProvider(corr) if args.provider == "gn" else SilhouetteFDProvider()
    cfg = RefinementConfig(max_iterations=args.max_iterations)
    traj = refine(init, obs, mesh, provider, camera, cfg)
    record = ex.evaluate(traj.final, scene, mesh, traj)

    reference = GaussNewtonProvider(corr)
    rmse = [reference.reprojection_rmse(s.state, camera) for s in traj.steps]
    final_scene = AnnotatedScene(scene.mesh_path, traj.final.intrinsics(camera), traj.final.pose, scene.reparam_k)
    final = io.annotation_to_dict(final_scene)
    final["terminated_by"] = record.terminated_by
    final["metrics"] = {
        "focal_rel_error": record.focal_rel_error,
        "rotation_error_rad": record.rotation_error,
        "xy_error_m": record.xy_error,
        "reproj_rmse_px": record.reproj_rmse,
        "iterations": record.iterations,
    }
    pred = render_silhouette(mesh, traj.final.pose, traj.final.intrinsics(camera))
    prefix = args.out_prefix
    io.write_outputs(
        {
            f"{prefix}_trajectory.csv": io.trajectory_csv(traj, rmse),
            f"{prefix}_final.json": io.dumps_json(final),
            f"{prefix}_pred.pgm": io.pgm_bytes(pred),
            f"{prefix}_obs.pgm": io.pgm_bytes(obs),
        }
    )
    print(
        f"{record.terminated_by} after {record.iterations} iterations: "
        f"focal_rel_error={record.focal_rel_error:.3g} "
        f"rotation_error_deg={math.degrees(record.rotation_error):.3g} "
        f"reproj_rmse_px={record.reproj_rmse:.3g}"
    )
    return EXIT_OK


def cmd_ambiguity(args) -> int:
    if args.annotation is not None:
        scene = io.load_annotation(args.annotation)
        mesh = _scene_mesh(scene, args.annotation)
        if not scene.is_reannotated:
            scene = reannotate(scene, args.k)
    else:
        mesh = io.load_mesh(args.mesh)
        rotation = Rotation.identity() if args.fronto_parallel else None
        cfg = ex.SceneSamplerConfig(seed=args.seed)
        scene = ex.generate_scene(cfg, mesh, k=args.k, rotation=rotation).scene
    alphas = sorted(set(args.alphas) | {1.0})
    curve = ex.ambiguity_sweep(scene, mesh, alphas)
    io.write_outputs({args.out: io.ambiguity_csv(curve)})
    for a, lj, ld in zip(curve.alphas, curve.loss_joint_manifold, curve.loss_decomposed):
        print(f"alpha={a:<6g} loss_joint={lj:.6f} loss_decomposed={ld:.6f}")
    print(f"curvature_ratio={curve.curvature_ratio:.6g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    meshes = []
    for ref in args.mesh_set.split(","):
        ref = ref.strip()
        meshes.append(io.load_mesh(f"builtin:{ref}" if ref in BUILTIN_MESHES else ref))
    workers = ex.default_workers()
    result = ex.run_benchmark(
        ex.SceneSamplerConfig(),
        meshes,
        provider=args.provider,
        trials=args.trials,
        seed=args.seed,
        k=args.k,
        perturb=not args.no_perturb,
        refine_cfg=RefinementConfig(max_iterations=args.max_iterations),
        workers=workers,
    )
    out = Path(args.out)
    summary_path = out.with_name(out.stem + "_summary" + (out.suffix or ".csv"))
    io.write_outputs({out: io.benchmark_csv(result), summary_path: io.summary_csv(result)})

    n = len(result.trials)
    print(f"{'metric':<18}{'median':>14}{'p90':>14}{'max':>14}")
    for name, s in result.summary.items():
        print(f"{name:<18}{s['median']:>14.4g}{s['p90']:>14.4g}{s['max']:>14.4g}")
    print(f"success {result.successes}/{n}, errors {len(result.failures)}/{n}")
    for t in result.failures:
        print(f"trial {t.trial} (seed {t.seed}, {t.mesh}): {t.error}", file=sys.stderr)
    if len(result.failures) > BENCH_MAX_ERROR_RATE * n:
        return EXIT_NUMERIC
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focalsplit",
        description="Depth-pinned pose and focal-length refinement.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reannotate", help="pin t_z to k and rescale f")
    p.add_argument("input")
    p.add_argument("--k", type=_positive(float), default=DEFAULT_K)
    p.add_argument("--out", required=True)
    p.add_argument("--no-report", action="store_true", help="skip the per-vertex residual report")
    p.set_defaults(func=cmd_reannotate)

    p = sub.add_parser("restore-metric", help="lift a re-annotated scene back to a metric depth")
    p.add_argument("input")
    p.add_argument("--depth", type=_positive(float), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_restore_metric)

    p = sub.add_parser("fit", help="run render-and-compare refinement")
    p.add_argument("annotation", nargs="?")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--mesh", default="builtin:cube", help="mesh for --synthetic")
    p.add_argument("--provider", choices=("gn", "fd"), default="gn")
    p.add_argument("--k", type=_positive(float), default=DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("perturb", "gt", "bbox"), default="perturb")
    p.add_argument("--max-iterations", type=_positive(int), default=50)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ambiguity", help="sweep (f, t_z) co-scaling against f alone")
    p.add_argument("--mesh", default="builtin:cube")
    p.add_argument("--annotation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_positive(float), default=DEFAULT_K)
    p.add_argument("--alphas", type=_alphas, default=[0.5, 0.8, 1.0, 1.25, 2.0])
    p.add_argument("--fronto-parallel", action="store_true", help="identity object rotation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ambiguity)

    p = sub.add_parser("bench", help="seeded synthetic benchmark")
    p.add_argument("--mesh-set", default="cube,icosphere")
    p.add_argument("--trials", type=_positive(int), default=100)
    p.add_argument("--provider", choices=("gn", "fd"), default="gn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_positive(float), default=DEFAULT_K)
    p.add_argument("--max-iterations", type=_positive(int), default=50)
    p.add_argument("--no-perturb", action="store_true", help="start every trial at ground truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FocalSplitError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

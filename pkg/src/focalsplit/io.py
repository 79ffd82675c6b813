"""File formats: OBJ meshes, annotation JSON, PGM masks and CSV outputs.

Annotation JSON::

    {
      "image":  {"width": 640, "height": 480},
      "camera": {"f": 600.0, "cx": 320.0, "cy": 240.0},
      "object": {"mesh": "builtin:cube",
                 "rotation": [w, x, y, z],
                 "translation": [x, y, z]},
      "reparam": {"k": 1.0}            # only for re-annotated scenes
    }

Relative mesh paths resolve against the annotation file's directory;
``builtin:<name>`` selects a procedural mesh. Floats are written with
Python's shortest round-trip representation, so load/save/load is a fixed
point. All writers replace their target atomically.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IndexOutOfRange, ParseError
from .geometry import CameraIntrinsics, Pose, Rotation, Vec3
from .meshes import Mesh, builtin_mesh
from .renderer import SilhouetteImage
from .reparam import AnnotatedScene

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = "iter,qw,qx,qy,qz,x,y,f,loss,reproj_rmse,clamped"
BENCHMARK_HEADER = (
    "trial,seed,mesh,focal_rel_err,rot_err_rad,xy_err_m,reproj_rmse_px,iters,terminated_by"
)
AMBIGUITY_HEADER = "alpha,loss_joint,loss_decomposed"
SUMMARY_HEADER = "metric,median,p90,max"
BUILTIN_PREFIX = "builtin:"


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- atomic output -----------------------------------------------------------


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_outputs(outputs: dict) -> None:
    """Write several pre-rendered files; nothing is written until all bytes exist."""
    staged = {Path(p): (d.encode() if isinstance(d, str) else d) for p, d in outputs.items()}
    for path, data in staged.items():
        atomic_write(path, data)


# -- OBJ ---------------------------------------------------------------------


def parse_obj(text: str, path=None) -> Mesh:
    vertices: list[list[float]] = []
    faces: list[tuple[list[int], int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError("vertex needs three coordinates", path, lineno)
            try:
                xyz = [float(c) for c in parts[1:4]]
            except ValueError as exc:
                raise ParseError(f"bad vertex coordinate: {exc}", path, lineno) from None
            if not all(math.isfinite(c) for c in xyz):
                raise ParseError("vertex coordinates must be finite", path, lineno)
            vertices.append(xyz)
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face needs at least three vertices", path, lineno)
            try:
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"bad face index: {exc}", path, lineno) from None
            faces.append((idx, lineno))
    n = len(vertices)
    triangles = []
    for idx, lineno in faces:
        zero_based = []
        for i in idx:
            # negative indices count back from the end of the vertex list
            j = i - 1 if i > 0 else n + i
            if i == 0 or not 0 <= j < n:
                raise IndexOutOfRange(f"face index {i} out of range for {n} vertices", path, lineno)
            zero_based.append(j)
        for a in range(1, len(zero_based) - 1):
            triangles.append((zero_based[0], zero_based[a], zero_based[a + 1]))
    name = Path(path).stem if path is not None else "mesh"
    return Mesh(np.array(vertices, dtype=float).reshape(-1, 3), np.array(triangles).reshape(-1, 3), name)


def load_mesh(path) -> Mesh:
    """Load an OBJ file, or a procedural mesh given as ``builtin:<name>``."""
    spec = str(path)
    if spec.startswith(BUILTIN_PREFIX):
        return builtin_mesh(spec[len(BUILTIN_PREFIX) :])
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not a text file: {exc}", path) from None
    return parse_obj(text, path)


def resolve_mesh(mesh_ref: str, relative_to=None) -> Mesh:
    if mesh_ref.startswith(BUILTIN_PREFIX) or relative_to is None:
        return load_mesh(mesh_ref)
    p = Path(mesh_ref)
    if not p.is_absolute():
        p = Path(relative_to).parent / p
    return load_mesh(p)


# -- annotations -------------------------------------------------------------


def _number(obj, key, where, path):
    try:
        val = obj[key]
    except (KeyError, TypeError):
        raise ParseError(f"missing key {where}.{key}", path) from None
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ParseError(f"{where}.{key} must be a finite number, got {val!r}", path)
    return val


def _vector(obj, key, n, where, path):
    try:
        val = obj[key]
    except (KeyError, TypeError):
        raise ParseError(f"missing key {where}.{key}", path) from None
    if not isinstance(val, list) or len(val) != n:
        raise ParseError(f"{where}.{key} must be a list of {n} numbers", path)
    return [_number(val, i, f"{where}.{key}", path) for i in range(n)]


def annotation_from_dict(data: dict, path=None) -> AnnotatedScene:
    if not isinstance(data, dict):
        raise ParseError("annotation must be a JSON object", path)
    image, camera, obj = (data.get(k) for k in ("image", "camera", "object"))
    for name, section in (("image", image), ("camera", camera), ("object", obj)):
        if not isinstance(section, dict):
            raise ParseError(f"missing section {name!r}", path)
    width = _number(image, "width", "image", path)
    height = _number(image, "height", "image", path)
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise ParseError("image width/height must be positive integers", path)
    f = _number(camera, "f", "camera", path)
    cx = _number(camera, "cx", "camera", path)
    cy = _number(camera, "cy", "camera", path)
    mesh = obj.get("mesh")
    if not isinstance(mesh, str):
        raise ParseError("object.mesh must be a string", path)
    q = _vector(obj, "rotation", 4, "object", path)
    t = _vector(obj, "translation", 3, "object", path)
    norm = math.sqrt(sum(c * c for c in q))
    if norm == 0:
        raise ParseError("object.rotation is a zero quaternion", path)
    if abs(norm - 1.0) > 1e-6:
        log.warning("%s: rotation quaternion has norm %.9g; re-normalizing", path or "<annotation>", norm)
    k = None
    if "reparam" in data and data["reparam"] is not None:
        k = float(_number(data["reparam"], "k", "reparam", path))
    try:
        return AnnotatedScene(
            mesh,
            CameraIntrinsics(float(f), float(cx), float(cy), int(width), int(height)),
            Pose(Rotation(tuple(float(c) for c in q)), Vec3(*(float(c) for c in t))),
            k,
        )
    except (ValueError, ArithmeticError) as exc:
        raise ParseError(str(exc), path) from None


def annotation_to_dict(scene: AnnotatedScene) -> dict:
    intr = scene.intrinsics
    t = scene.pose.translation
    data = {
        "image": {"width": intr.width, "height": intr.height},
        "camera": {"f": float(intr.f), "cx": float(intr.cx), "cy": float(intr.cy)},
        "object": {
            "mesh": scene.mesh_path,
            "rotation": [float(c) for c in scene.pose.rotation.q],
            "translation": [float(t.x), float(t.y), float(t.z)],
        },
    }
    if scene.reparam_k is not None:
        data["reparam"] = {"k": float(scene.reparam_k)}
    return data


def dumps_json(data: dict) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def load_annotation(path) -> AnnotatedScene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    return annotation_from_dict(data, path)


def save_annotation(scene: AnnotatedScene, path) -> None:
    atomic_write(path, dumps_json(annotation_to_dict(scene)).encode())


# -- PGM ---------------------------------------------------------------------


def pgm_bytes(img: SilhouetteImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + (img.mask.astype(np.uint8) * 255).tobytes()


def read_pgm(path) -> SilhouetteImage:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", path)
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P5" or fields[3] != b"255":
        raise ParseError("expected binary PGM (P5) with maxval 255", path)
    w, h = int(fields[1]), int(fields[2])
    raster = np.frombuffer(data[pos:], dtype=np.uint8)
    if raster.size != w * h:
        raise ParseError(f"PGM raster has {raster.size} bytes, expected {w * h}", path)
    return SilhouetteImage(w, h, raster.reshape(h, w) > 0)


# -- CSV ---------------------------------------------------------------------


def csv_text(header: str, rows: Iterable[Sequence]) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def trajectory_csv(trajectory, reproj_rmse: Sequence[float]) -> str:
    rows = []
    for step, rmse in zip(trajectory.steps, reproj_rmse):
        s = step.state
        rows.append((step.iteration, *s.rotation.q, s.x, s.y, s.f, step.loss, rmse, s.clamped))
    return csv_text(TRAJECTORY_HEADER, rows)


def benchmark_csv(result) -> str:
    rows = []
    for t in result.trials:
        r = t.record
        if r is None:
            nan = math.nan
            rows.append((t.trial, t.seed, t.mesh, nan, nan, nan, nan, 0, "error"))
        else:
            rows.append(
                (
                    t.trial,
                    t.seed,
                    t.mesh,
                    r.focal_rel_error,
                    r.rotation_error,
                    r.xy_error,
                    r.reproj_rmse,
                    r.iterations,
                    r.terminated_by,
                )
            )
    return csv_text(BENCHMARK_HEADER, rows)


def summary_csv(result) -> str:
    rows = [(name, s["median"], s["p90"], s["max"]) for name, s in result.summary.items()]
    n = len(result.trials)
    rows.append(("success_rate", result.successes / n, "", ""))
    rows.append(("error_rate", len(result.failures) / n, "", ""))
    return csv_text(SUMMARY_HEADER, rows)


def ambiguity_csv(curve) -> str:
    rows = zip(curve.alphas, curve.loss_joint_manifold, curve.loss_decomposed)
    return csv_text(AMBIGUITY_HEADER, rows)

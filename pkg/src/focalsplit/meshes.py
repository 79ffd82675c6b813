"""Triangle meshes and the procedural shapes shipped with the package.

All built-in shapes are centered on the object origin and sized for a
desk-scale scene viewed from about one meter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh, InputError


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertices ``(N, 3)`` in meters and 0-based triangle indices ``(M, 3)``."""

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise InputError(f"triangle index out of range for {len(v)} vertices")
        if not np.all(np.isfinite(v)):
            raise InputError("mesh vertices must be finite")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.triangles, other.triangles
        )

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.triangles.tobytes()))

    def require_vertices(self) -> None:
        if len(self.vertices) == 0:
            raise EmptyMesh(f"mesh {self.name!r} has no vertices")

    def require_triangles(self) -> None:
        self.require_vertices()
        if len(self.triangles) == 0:
            raise EmptyMesh(f"mesh {self.name!r} has no triangles")

    def scaled(self, s: float) -> Mesh:
        return Mesh(self.vertices * s, self.triangles, self.name)

    @property
    def is_planar_z0(self) -> bool:
        return bool(len(self.vertices)) and bool(np.all(self.vertices[:, 2] == 0.0))


def cube(edge: float = 0.3) -> Mesh:
    h = edge / 2.0
    v = [[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)]
    # index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x = -h, x = +h
        (0, 4, 5, 1), (2, 3, 7, 6),  # y = -h, y = +h
        (0, 2, 6, 4), (1, 5, 7, 3),  # z = -h, z = +h
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return Mesh(v, tris, "cube")


def quad(width: float = 0.4, height: float = 0.3) -> Mesh:
    """Rectangle in the object ``z = 0`` plane; fronto-parallel under identity rotation."""
    w, h = width / 2.0, height / 2.0
    v = [[-w, -h, 0.0], [w, -h, 0.0], [w, h, 0.0], [-w, h, 0.0]]
    return Mesh(v, [(0, 1, 2), (0, 2, 3)], "quad")


def icosphere(radius: float = 0.15, subdivisions: int = 1) -> Mesh:
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(np.array(verts) * radius, faces, "icosphere")


def l_bracket(size: float = 0.3, thickness: float = 0.08, depth: float = 0.12) -> Mesh:
    """L-shaped extrusion: an L profile in the xy plane extruded along z."""
    s, t = size, thickness
    profile = [(0, 0), (s, 0), (s, t), (t, t), (t, s), (0, s)]
    # center the bounding box on the origin
    off = np.array([s / 2.0, s / 2.0])
    ring = [np.array(p, dtype=float) - off for p in profile]
    n = len(ring)
    v = [[p[0], p[1], -depth / 2.0] for p in ring] + [[p[0], p[1], depth / 2.0] for p in ring]
    # caps: the L profile split into two convex pieces
    cap = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]
    tris = [(c, b, a) for a, b, c in cap] + [(a + n, b + n, c + n) for a, b, c in cap]
    for i in range(n):
        j = (i + 1) % n
        tris += [(i, j, j + n), (i, j + n, i + n)]
    return Mesh(v, tris, "l_bracket")


BUILTIN_MESHES = {
    "cube": cube,
    "quad": quad,
    "icosphere": icosphere,
    "l_bracket": l_bracket,
}


def builtin_mesh(name: str) -> Mesh:
    try:
        return BUILTIN_MESHES[name]()
    except KeyError:
        raise InputError(
            f"unknown built-in mesh {name!r}; choose from {sorted(BUILTIN_MESHES)}"
        ) from None

"""Triangle mesh loading and validation (Wavefront OBJ subset).

Supported records: ``v x y z`` and ``f i j k [l ...]`` with 1-based
positive indices; ``i/t/n`` vertex references keep only the position
index. Polygons are fan-triangulated. Everything else is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64, length units
    faces: np.ndarray     # (f, 3) int64, 0-based

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (f, 3), got {f.shape}")
        if v.shape[0] == 0 or f.shape[0] == 0:
            raise MeshError("mesh is empty")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise MeshError("face index out of range")
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if repeated.any():
            raise MeshError(f"face {int(np.argmax(repeated))} repeats a vertex index")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as (e, 2) with u < v."""
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                                self.faces[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def face_areas(self) -> np.ndarray:
        p0 = self.vertices[self.faces[:, 0]]
        p1 = self.vertices[self.faces[:, 1]]
        p2 = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def load_obj(path) -> TriangleMesh:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc

    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: bad vertex '{raw}'") from exc
        elif parts[0] == "f":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: face needs at least 3 vertices")
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad face token '{token}'") from exc
                if i <= 0:
                    raise MeshError(f"{path}:{lineno}: only positive 1-based indices supported")
                idx.append(i - 1)
            for a in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[a], idx[a + 1]])
        # normals, texcoords, groups, materials: ignored

    if not vertices:
        raise MeshError(f"{path}: no vertices")
    if not faces:
        raise MeshError(f"{path}: no faces")
    faces_arr = np.asarray(faces, dtype=np.int64)
    if faces_arr.max() >= len(vertices):
        raise MeshError(f"{path}: face index {faces_arr.max() + 1} exceeds vertex count")
    return TriangleMesh(vertices=np.asarray(vertices), faces=faces_arr)


def write_obj(mesh: TriangleMesh, path):
    """Debugging helper; text written round-trips through load_obj."""
    lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class MeshReport:
    zero_area_faces: tuple[int, ...] = ()
    unreferenced_vertices: tuple[int, ...] = ()
    nonmanifold_edges: tuple[tuple[int, int], ...] = ()

    @property
    def is_clean(self) -> bool:
        return not (self.zero_area_faces or self.unreferenced_vertices
                    or self.nonmanifold_edges)


def validate(mesh: TriangleMesh, area_epsilon: float = 1e-12) -> MeshReport:
    """Report zero-area faces, unreferenced vertices, and non-manifold edges.

    Pure report; never modifies or repairs the mesh. A face is flagged
    when its area falls below ``area_epsilon`` times the squared
    bounding-box diagonal.
    """
    areas = mesh.face_areas()
    threshold = area_epsilon * mesh.bbox_diagonal() ** 2
    zero_faces = tuple(int(i) for i in np.flatnonzero(areas < threshold))

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[mesh.faces.ravel()] = True
    unreferenced = tuple(int(i) for i in np.flatnonzero(~referenced))

    pairs = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]],
                            mesh.faces[:, [2, 0]]])
    pairs.sort(axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    nonmanifold = tuple((int(u), int(v)) for (u, v), c in zip(uniq, counts) if c > 2)

    return MeshReport(zero_area_faces=zero_faces,
                      unreferenced_vertices=unreferenced,
                      nonmanifold_edges=nonmanifold)

"""Quad surface meshes and their on-disk forms.

OBJ output is plain ASCII: ``v x y z`` lines (voxel units, ``%.6f``),
then one ``f a b c d`` line per quad (1-based), then, if a boundary is
attached, a single ``l`` line listing its vertex indices with the first
repeated at the end.  The JSON form is
``{"vertices": [[x,y,z],...], "quads": [[a,b,c,d],...], "boundary": [i,...]}``
with 0-based indices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass
class SurfaceMesh:
    vertices: np.ndarray                 # (V, 3) float
    quads: np.ndarray                    # (Q, 4) int
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.quads = np.asarray(self.quads, dtype=np.int64).reshape(-1, 4)
        self.boundary = np.asarray(self.boundary, dtype=np.int64).ravel()
        if len(self.quads) and (self.quads.min() < 0 or self.quads.max() >= len(self.vertices)):
            raise MeshError("quad index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex-index pairs."""
        q = self.quads
        e = np.concatenate([q[:, [0, 1]], q[:, [1, 2]], q[:, [2, 3]], q[:, [3, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_face_counts(self) -> dict:
        q = self.quads
        e = np.sort(np.concatenate([q[:, [0, 1]], q[:, [1, 2]], q[:, [2, 3]], q[:, [3, 0]]]), axis=1)
        keys, counts = np.unique(e, axis=0, return_counts=True)
        return {tuple(map(int, k)): int(c) for k, c in zip(keys, counts)}

    def euler_characteristic(self) -> int:
        used = np.unique(self.quads)
        return len(used) - len(self.edges()) + self.n_quads

    def n_components(self) -> int:
        """Edge-connected components of the quads."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components
        if not self.n_quads:
            return 0
        e = self.edges()
        n = self.n_vertices
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, lab = connected_components(g, directed=False)
        return len(np.unique(lab[np.unique(self.quads)]))

    def quad_centers(self) -> np.ndarray:
        return self.vertices[self.quads].mean(axis=1)


def mesh_obj(mesh: SurfaceMesh) -> str:
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += ["f " + " ".join(str(int(i) + 1) for i in q) for q in mesh.quads]
    if len(mesh.boundary):
        idx = list(mesh.boundary) + [mesh.boundary[0]]
        lines.append("l " + " ".join(str(int(i) + 1) for i in idx))
    return "\n".join(lines) + "\n"


def write_obj(path, mesh: SurfaceMesh) -> None:
    Path(path).write_text(mesh_obj(mesh))


def read_obj(path) -> SurfaceMesh:
    verts, quads, boundary = [], [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
            if len(idx) != 4:
                raise MeshError(f"only quad faces are supported, got {len(idx)} indices")
            quads.append(idx)
        elif parts[0] == "l":
            idx = [int(t) - 1 for t in parts[1:]]
            if len(idx) > 1 and idx[0] == idx[-1]:
                idx = idx[:-1]
            boundary = idx
    return SurfaceMesh(np.array(verts).reshape(-1, 3), np.array(quads).reshape(-1, 4), boundary)


def mesh_json(mesh: SurfaceMesh) -> str:
    obj = {"vertices": np.round(mesh.vertices, 6).tolist(),
           "quads": mesh.quads.tolist(),
           "boundary": mesh.boundary.tolist()}
    return json.dumps(obj, separators=(",", ":"))


def read_mesh_json(path) -> SurfaceMesh:
    obj = json.loads(Path(path).read_text())
    return SurfaceMesh(np.array(obj["vertices"]).reshape(-1, 3),
                       np.array(obj["quads"]).reshape(-1, 4), obj.get("boundary", []))


def read_mesh(path) -> SurfaceMesh:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_mesh_json(path)
    return read_obj(path)

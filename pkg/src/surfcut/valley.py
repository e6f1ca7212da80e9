"""Valley retraction: peel the visited 3-complex down to a surface bounded by ∂S.

The complex lives on a dense doubled grid (one byte per face).  2-faces are
popped from a max-heap on the mean ``U`` of their corners; a popped face is
collapsed with its single remaining 3-face, or, once no 3-face touches it,
with a free 1-face that is not on the boundary loop.  Whenever a removal
changes what a neighbouring 2-face could pair with, that face is pushed
again, so the peeling runs until nothing removable is left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._heap import heap_grow, heap_pop, heap_push
from .boundary import BoundaryCurve
from .cubical import CubicalComplex
from .fmm import FmmResult, backtrack_minimal_path, BacktrackError
from .mesh import SurfaceMesh

ABSENT, PRESENT, PINNED = 0, 1, 2
_F32_MAX = float(np.finfo(np.float32).max)


class ValleyError(ValueError):
    pass


@dataclass
class GridComplex:
    """A cubical complex stored as a membership array over doubled coordinates."""

    mem: np.ndarray     # uint8, shape (2nx-1, 2ny-1, 2nz-1)

    def faces_of_dim(self, d: int) -> np.ndarray:
        idx = np.argwhere(self.mem > 0)
        return idx[(idx & 1).sum(axis=1) == d]

    def counts(self) -> tuple[int, int, int, int]:
        idx = np.argwhere(self.mem > 0)
        dims = (idx & 1).sum(axis=1)
        return tuple(int(np.sum(dims == d)) for d in range(4))

    def euler_characteristic(self) -> int:
        n = self.counts()
        return n[0] - n[1] + n[2] - n[3]

    def __contains__(self, f) -> bool:
        f = tuple(int(c) for c in f)
        if any(c < 0 or c >= s for c, s in zip(f, self.mem.shape)):
            return False
        return bool(self.mem[f])

    def to_complex(self) -> CubicalComplex:
        return CubicalComplex.from_closed(map(tuple, np.argwhere(self.mem > 0).tolist()))


def _u_array(U) -> np.ndarray:
    if isinstance(U, FmmResult):
        return U.U
    data = U.data if hasattr(U, "data") else U
    arr = np.asarray(data, dtype=np.float64).copy()
    arr[arr >= 0.5 * _F32_MAX] = np.inf
    return arr


def full_complex(visited: np.ndarray) -> np.ndarray:
    """Membership grid holding every face whose corner voxels are all visited."""
    nx, ny, nz = visited.shape
    mem = np.zeros((2 * nx - 1, 2 * ny - 1, 2 * nz - 1), dtype=np.uint8)
    mem[::2, ::2, ::2] = visited
    mem[1::2, ::2, ::2] = mem[:-1:2, ::2, ::2] & mem[2::2, ::2, ::2]
    mem[:, 1::2, ::2] = mem[:, :-1:2, ::2] & mem[:, 2::2, ::2]
    mem[:, :, 1::2] = mem[:, :, :-1:2] & mem[:, :, 2::2]
    return mem


@njit(cache=True)
def _face_cost(a, b, c, U):
    """Mean of ``U`` over the corner voxels of face ``(a, b, c)``."""
    a0, a1 = (a - 1) >> 1, (a + 1) >> 1
    b0, b1 = (b - 1) >> 1, (b + 1) >> 1
    c0, c1 = (c - 1) >> 1, (c + 1) >> 1
    if not a & 1:
        a0 = a1 = a >> 1
    if not b & 1:
        b0 = b1 = b >> 1
    if not c & 1:
        c0 = c1 = c >> 1
    s = 0.0
    n = 0
    for i in range(a0, a1 + 1):
        for j in range(b0, b1 + 1):
            for k in range(c0, c1 + 1):
                s += U[i, j, k]
                n += 1
    return s / n


@njit(cache=True)
def _n_cofaces(mem, a, b, c, X, Y, Z):
    """Number of present faces one dimension up."""
    n = 0
    if not a & 1:
        if a > 0 and mem[a - 1, b, c]:
            n += 1
        if a < X - 1 and mem[a + 1, b, c]:
            n += 1
    if not b & 1:
        if b > 0 and mem[a, b - 1, c]:
            n += 1
        if b < Y - 1 and mem[a, b + 1, c]:
            n += 1
    if not c & 1:
        if c > 0 and mem[a, b, c - 1]:
            n += 1
        if c < Z - 1 and mem[a, b, c + 1]:
            n += 1
    return n


@njit(cache=True)
def _peel(mem, U, record):
    X, Y, Z = mem.shape
    queued = np.zeros(mem.shape, dtype=np.uint8)
    keys = np.empty(1024, dtype=np.float64)
    ids = np.empty(1024, dtype=np.int64)
    size = 0
    log = np.empty((1024, 2), dtype=np.int64)
    nlog = 0
    for a in range(X):
        for b in range(Y):
            for c in range(Z):
                if mem[a, b, c] and (a & 1) + (b & 1) + (c & 1) == 2:
                    if size == keys.shape[0]:
                        keys, ids = heap_grow(keys, ids, size)
                    size = heap_push(keys, ids, size, -_face_cost(a, b, c, U), (a * Y + b) * Z + c)
                    queued[a, b, c] = 1
    nbr = np.empty((32, 3), dtype=np.int64)
    while size > 0:
        _, g, size = heap_pop(keys, ids, size)
        a = g // (Y * Z)
        b = (g // Z) % Y
        c = g % Z
        queued[a, b, c] = 0
        if mem[a, b, c] != PRESENT:
            continue
        # the even axis of the 2-face
        ax = 0 if not a & 1 else (1 if not b & 1 else 2)
        cell = -1
        n3 = 0
        for s in (-1, 1):
            q0 = a + s if ax == 0 else a
            q1 = b + s if ax == 1 else b
            q2 = c + s if ax == 2 else c
            if 0 <= q0 < X and 0 <= q1 < Y and 0 <= q2 < Z and mem[q0, q1, q2]:
                n3 += 1
                cell = (q0 * Y + q1) * Z + q2
        nn = 0
        removed = -1
        if n3 == 1:
            h0 = cell // (Y * Z)
            h1 = (cell // Z) % Y
            h2 = cell % Z
            mem[a, b, c] = ABSENT
            mem[h0, h1, h2] = ABSENT
            removed = cell
            # the other 2-faces of the removed cell
            for d in range(3):
                for s in (-1, 1):
                    f0 = h0 + s if d == 0 else h0
                    f1 = h1 + s if d == 1 else h1
                    f2 = h2 + s if d == 2 else h2
                    if mem[f0, f1, f2] == PRESENT:
                        nbr[nn, 0] = f0
                        nbr[nn, 1] = f1
                        nbr[nn, 2] = f2
                        nn += 1
        elif n3 == 0:
            for d in range(3):
                if d == ax:
                    continue
                for s in (-1, 1):
                    f0 = a + s if d == 0 else a
                    f1 = b + s if d == 1 else b
                    f2 = c + s if d == 2 else c
                    if removed < 0 and mem[f0, f1, f2] == PRESENT \
                            and _n_cofaces(mem, f0, f1, f2, X, Y, Z) == 1:
                        mem[a, b, c] = ABSENT
                        mem[f0, f1, f2] = ABSENT
                        removed = (f0 * Y + f1) * Z + f2
        if removed < 0:
            continue
        if record:
            if nlog == log.shape[0]:
                nl = np.empty((2 * nlog, 2), dtype=np.int64)
                nl[:nlog] = log[:nlog]
                log = nl
            log[nlog, 0] = g
            log[nlog, 1] = removed
            nlog += 1
        # 2-faces sharing a 1-face with g may have become free
        for d in range(3):
            if d == ax:
                continue
            for s in (-1, 1):
                e0 = a + s if d == 0 else a
                e1 = b + s if d == 1 else b
                e2 = c + s if d == 2 else c
                if not mem[e0, e1, e2]:
                    continue
                for d2 in range(3):
                    if (d2 == 0 and e0 & 1) or (d2 == 1 and e1 & 1) or (d2 == 2 and e2 & 1):
                        continue
                    for s2 in (-1, 1):
                        f0 = e0 + s2 if d2 == 0 else e0
                        f1 = e1 + s2 if d2 == 1 else e1
                        f2 = e2 + s2 if d2 == 2 else e2
                        if 0 <= f0 < X and 0 <= f1 < Y and 0 <= f2 < Z \
                                and mem[f0, f1, f2] == PRESENT \
                                and (f0 & 1) + (f1 & 1) + (f2 & 1) == 2:
                            nbr[nn, 0] = f0
                            nbr[nn, 1] = f1
                            nbr[nn, 2] = f2
                            nn += 1
        for k in range(nn):
            f0 = nbr[k, 0]
            f1 = nbr[k, 1]
            f2 = nbr[k, 2]
            if queued[f0, f1, f2]:
                continue
            queued[f0, f1, f2] = 1
            if size == keys.shape[0]:
                keys, ids = heap_grow(keys, ids, size)
            size = heap_push(keys, ids, size, -_face_cost(f0, f1, f2, U), (f0 * Y + f1) * Z + f2)
    return log[:nlog]


def _pin(mem: np.ndarray, boundary: BoundaryCurve) -> None:
    shape = np.array(mem.shape)
    for arr in (boundary.vertices, boundary.edges):
        if np.any(arr < 0) or np.any(arr >= shape):
            raise ValleyError("boundary lies outside the volume")
        vals = mem[arr[:, 0], arr[:, 1], arr[:, 2]]
        if np.any(vals == ABSENT):
            raise ValleyError("boundary face outside the visited region")
        mem[arr[:, 0], arr[:, 1], arr[:, 2]] = PINNED


def valley_extract(U, boundary: BoundaryCurve, record: bool = False):
    """Retract the visited complex onto the valley surface spanning ``boundary``.

    ``U`` is an :class:`FmmResult`, a ``ScalarVolume`` or an array; voxels
    that are not finite (or float32-max placeholders) count as unvisited.
    With ``record=True`` also returns the removed (2-face, partner) pairs as
    flat doubled-grid indices in removal order.
    """
    u = _u_array(U)
    visited = np.isfinite(u)
    mem = full_complex(visited)
    _pin(mem, boundary)
    u_filled = np.where(visited, u, 0.0)
    log = _peel(mem, u_filled, record)
    out = GridComplex(mem)
    return (out, log) if record else out


def complex_to_mesh(X, boundary: BoundaryCurve | None = None) -> SurfaceMesh:
    """One quad per 2-face; vertices are lattice points, deduplicated."""
    if isinstance(X, GridComplex):
        if np.any(X.faces_of_dim(3)):
            raise ValleyError("complex still has 3-faces")
        faces = X.faces_of_dim(2)
    else:
        if X.dimension > 2:
            raise ValleyError("complex still has 3-faces")
        faces = np.array(X.faces_of_dim(2), dtype=np.int64).reshape(-1, 3)
    faces = faces[np.lexsort(faces.T[::-1])] if len(faces) else faces
    corners = np.empty((len(faces), 4, 3), dtype=np.int64)
    for n, f in enumerate(faces):
        u, v = np.flatnonzero(f & 1)
        for k, (su, sv) in enumerate(((-1, -1), (1, -1), (1, 1), (-1, 1))):
            q = f.copy()
            q[u] += su
            q[v] += sv
            corners[n, k] = q
    flat = corners.reshape(-1, 3)
    extra = 2 * boundary.lattice if boundary is not None else np.zeros((0, 3), dtype=np.int64)
    verts, inv = np.unique(np.vstack([flat, extra]), axis=0, return_inverse=True)
    inv = inv.ravel()
    quads = inv[:len(flat)].reshape(-1, 4)
    bidx = inv[len(flat):] if boundary is not None else np.zeros(0, dtype=np.int64)
    return SurfaceMesh(verts / 2.0, quads, bidx)


def verify_minimal_path_cover(mesh: SurfaceMesh, res: FmmResult, sample_count: int = 200,
                              tol: float = 2.0, rng_seed: int = 0) -> float:
    """Fraction of backtracked minimal-path points lying within ``tol`` of the mesh.

    ``sample_count`` mesh vertices are drawn with the given seed; points of
    all their minimal paths to the seed are pooled.
    """
    from scipy.spatial import cKDTree
    if mesh.n_vertices == 0:
        raise ValleyError("empty mesh")
    rng = np.random.default_rng(rng_seed)
    used = np.unique(mesh.quads) if mesh.n_quads else np.arange(mesh.n_vertices)
    pick = rng.choice(used, size=min(sample_count, len(used)), replace=False)
    pts = np.vstack([mesh.vertices[used], mesh.quad_centers()]) if mesh.n_quads \
        else mesh.vertices
    tree = cKDTree(pts)
    covered = total = 0
    for v in np.sort(pick):
        try:
            path, _ = backtrack_minimal_path(res, mesh.vertices[v])
        except BacktrackError:
            continue
        if not np.isfinite(tol):
            covered += len(path)
        else:
            d, _ = tree.query(path)
            covered += int(np.sum(d <= tol))
        total += len(path)
    return covered / total if total else 1.0

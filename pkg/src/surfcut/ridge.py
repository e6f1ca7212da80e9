"""Front complexes, their Morse complex, and the highest ridge loop.

The front at level ``D`` is the boundary surface of the cells whose eight
corners have ``U < D``.  Retracting it by free-face collapses in increasing
order of the Euclidean path length ``UE`` leaves the boundaries between
ascending manifolds (the ridges); merging ascending manifolds across their
lowest shared ridges leaves the single highest ridge loop.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from ._topo import fill_pinches, grow_ball
from .cubical import CubicalComplex
from .fmm import FmmResult, front_indicator

log = logging.getLogger(__name__)

_UNIT = np.eye(3, dtype=np.int64)


class RidgeError(RuntimeError):
    pass


@dataclass
class FrontComplex:
    """Closed 2-complex with per-face cost.

    ``faces``, ``edges`` and ``verts`` hold doubled coordinates, each sorted
    lexicographically so that array position is the tie-break rank.
    """

    faces: np.ndarray            # (F, 3)
    edges: np.ndarray            # (E, 3)
    verts: np.ndarray            # (V, 3)
    face_edges: np.ndarray       # (F, 4) edge ids
    edge_verts: np.ndarray       # (E, 2) vertex ids
    vert_cost: np.ndarray        # (V,)
    touches_domain_boundary: bool = False
    _edge_cofaces: list | None = field(default=None, repr=False)

    @property
    def edge_cost(self) -> np.ndarray:
        return self.vert_cost[self.edge_verts].mean(axis=1)

    @property
    def face_cost(self) -> np.ndarray:
        corners = np.unique(self.edge_verts[self.face_edges].reshape(len(self.faces), -1),
                            axis=1) if len(self.faces) else np.zeros((0, 4), int)
        return self.vert_cost[corners].mean(axis=1)

    def face_corners(self) -> np.ndarray:
        ev = self.edge_verts[self.face_edges].reshape(len(self.faces), 8)
        return np.sort(ev, axis=1)[:, ::2]

    @property
    def edge_cofaces(self) -> list[list[int]]:
        if self._edge_cofaces is None:
            cof: list[list[int]] = [[] for _ in range(len(self.edges))]
            for f, row in enumerate(self.face_edges):
                for e in row:
                    cof[e].append(f)
            self._edge_cofaces = cof
        return self._edge_cofaces

    def is_closed_surface(self) -> bool:
        counts = np.bincount(self.face_edges.ravel(), minlength=len(self.edges))
        return bool(np.all(counts % 2 == 0) and np.all(counts > 0))

    def to_complex(self) -> CubicalComplex:
        faces = [tuple(map(int, f)) for arr in (self.faces, self.edges, self.verts) for f in arr]
        X = CubicalComplex.from_closed(faces)
        fc = self.face_cost
        X.cost.update({tuple(map(int, f)): float(c) for f, c in zip(self.faces, fc)})
        X.cost.update({tuple(map(int, e)): float(c) for e, c in zip(self.edges, self.edge_cost)})
        X.cost.update({tuple(map(int, v)): float(c) for v, c in zip(self.verts, self.vert_cost)})
        return X


def _regularize_cells(cells: np.ndarray, seed_cell, key: np.ndarray) -> np.ndarray:
    """Inside cells whose boundary is a 2-sphere.

    First the seed's face-connected component with cavities filled and pinch
    patterns closed.  If that still has tunnels (cubes of a thin sheet can
    meet around a hole), a topological ball is grown from ``seed_cell`` in
    ascending ``key`` order instead; its boundary has a single separating
    ridge loop, which a front with handles does not.
    """
    filled = fill_pinches(cells)
    lab, _ = ndimage.label(filled)
    if not lab[seed_cell]:
        raise RidgeError(f"seed cell {seed_cell} is not inside the front")
    solid = ndimage.binary_fill_holes(lab == lab[seed_cell])
    solid = fill_pinches(solid)
    if solid_euler_characteristic(solid) == 1:
        return solid
    return grow_ball(solid, key, seed_cell)


def solid_euler_characteristic(cells: np.ndarray) -> int:
    """Euler characteristic of the union of closed unit cubes."""
    idx = np.argwhere(cells)
    if not len(idx):
        return 0
    sub = cells[tuple(slice(a, b + 1) for a, b in zip(idx.min(0), idx.max(0)))]
    g = np.zeros(tuple(2 * n + 1 for n in sub.shape), dtype=bool)
    g[1::2, 1::2, 1::2] = sub
    g = ndimage.binary_dilation(g, np.ones((3, 3, 3), bool))
    par = (np.indices(g.shape) & 1).sum(0)
    return int(sum((-1) ** d * np.count_nonzero(g & (par == d)) for d in range(4)))


def front_from_cells(cells: np.ndarray, vertex_cost: np.ndarray) -> FrontComplex:
    """Front complex bounding the cell set ``cells`` (shape ``vertex_cost.shape - 1``).

    Domain-boundary faces of inside cells are included so the surface is
    closed.  Every face gets the mean ``vertex_cost`` over its corners.
    """
    cells = np.asarray(cells, dtype=bool)
    if not cells.any():
        raise RidgeError("empty front: no inside cells")
    padded = np.pad(cells, 1)
    faces = []
    for ax in range(3):
        a = np.take(padded, np.arange(padded.shape[ax] - 1), axis=ax)
        b = np.take(padded, np.arange(1, padded.shape[ax]), axis=ax)
        idx = np.argwhere(a != b)
        f = 2 * idx - 1
        f[:, ax] = 2 * idx[:, ax]
        faces.append(f)
    faces = np.concatenate(faces)
    faces = np.unique(faces, axis=0)

    odd = faces & 1
    cand = []
    for ax in range(3):
        step = odd * _UNIT[ax]
        cand.append(faces - step)
        cand.append(faces + step)
    # each face has exactly two odd axes; rows with step 0 duplicate the face itself
    cand = np.stack(cand, axis=1)                          # (F, 6, 3)
    is_edge = ((cand & 1).sum(axis=2) == 1)
    edge_rows = cand[is_edge].reshape(len(faces), 4, 3)
    edges, inv = np.unique(edge_rows.reshape(-1, 3), axis=0, return_inverse=True)
    face_edges = inv.reshape(len(faces), 4)

    eodd = edges & 1
    ev = np.stack([edges - eodd, edges + eodd], axis=1)   # (E, 2, 3)
    verts, vinv = np.unique(ev.reshape(-1, 3), axis=0, return_inverse=True)
    edge_verts = vinv.reshape(len(edges), 2)
    vc = vertex_cost[verts[:, 0] // 2, verts[:, 1] // 2, verts[:, 2] // 2].astype(np.float64)

    touches = bool(cells[[0, -1], :, :].any() or cells[:, [0, -1], :].any()
                   or cells[:, :, [0, -1]].any())
    return FrontComplex(faces, edges, verts, face_edges, edge_verts, vc, touches)


def build_front_complex(res: FmmResult, D: float) -> FrontComplex:
    """Front of ``{U < D}`` with ``UE`` costs, grown from the seed's cell."""
    cells = front_indicator(res, D)
    if not cells.any():
        raise RidgeError(f"empty front at D={D}")
    key = cell_max_corner(res.U)
    seed = _seed_cell(res.seed, cells, key)
    return front_from_cells(_regularize_cells(cells, seed, key), res.UE)


def cell_max_corner(U: np.ndarray) -> np.ndarray:
    out = U[:-1, :-1, :-1].copy()
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                np.maximum(out, U[di:di + out.shape[0], dj:dj + out.shape[1],
                                  dk:dk + out.shape[2]], out=out)
    return out


def _seed_cell(seed, cells, key):
    """Cell of least key among the (up to eight) cells touching the seed voxel."""
    best = None
    for d in np.ndindex(2, 2, 2):
        c = tuple(s - o for s, o in zip(seed, d))
        if all(0 <= x < n for x, n in zip(c, cells.shape)) and cells[c]:
            if best is None or key[c] < key[best]:
                best = c
    if best is None:
        raise RidgeError(f"no front cell touches the seed {tuple(seed)}")
    return best


# --- Morse complex ----------------------------------------------------------

@dataclass
class MorseResult:
    """Residual 1-complex of the retraction plus labels.

    ``edge_alive``/``vert_alive`` mark the residual faces; ``face_label``
    gives each 2-face its ascending-manifold id; ``edge_label`` maps each
    residual edge to the unordered label set of its original cofaces.
    """

    face_label: np.ndarray
    edge_alive: np.ndarray
    vert_alive: np.ndarray
    edge_label: dict
    n_holes: int


def _morse(order, edge_cofaces, edge_verts, n_faces, n_verts) -> MorseResult:
    """Ridge retraction over an abstract 2-complex given by incidence lists.

    ``order`` is the pop order of the 1-faces (ascending cost, ties by rank).
    """
    n_edges = len(edge_cofaces)
    face_alive = np.ones(n_faces, dtype=bool)
    edge_alive = np.ones(n_edges, dtype=bool)
    vert_alive = np.ones(n_verts, dtype=bool)
    degree = np.zeros(n_verts, dtype=np.int64)
    for vs in edge_verts:
        for v in vs:
            degree[v] += 1
    label = np.full(n_faces, -1, dtype=np.int64)
    edge_label: dict[int, frozenset] = {}
    next_id = 0

    def drop_edge(e):
        edge_alive[e] = False
        for v in edge_verts[e]:
            degree[v] -= 1

    def process(e):
        nonlocal next_id
        alive = [f for f in edge_cofaces[e] if face_alive[f]]
        if len(alive) >= 2:
            drop_edge(e)
            for f in alive:
                face_alive[f] = False
                label[f] = next_id
            next_id += 1
        elif len(alive) == 1:
            f = alive[0]
            adj = [label[h] for h in edge_cofaces[e] if h != f and label[h] >= 0]
            drop_edge(e)
            face_alive[f] = False
            if adj:
                label[f] = min(adj)
            else:
                label[f] = next_id
                next_id += 1
        else:
            for v in edge_verts[e]:
                if vert_alive[v] and degree[v] == 1:
                    drop_edge(e)
                    vert_alive[v] = False
                    return
            edge_label[e] = frozenset(int(label[h]) for h in edge_cofaces[e])

    for e in order:
        if edge_alive[e]:
            process(e)
    # safety sweep: a surviving 2-face gets its 1-faces processed again
    while face_alive.any():
        f = int(np.flatnonzero(face_alive)[0])
        for e in sorted({e for e in range(n_edges) if f in edge_cofaces[e] and edge_alive[e]}):
            process(e)
        if face_alive[f]:
            raise RidgeError(f"2-face {f} cannot be removed")
    _trim_leaves(edge_alive, vert_alive, degree, edge_verts, order)
    edge_label = {e: l for e, l in edge_label.items() if edge_alive[e]}
    return MorseResult(label, edge_alive, vert_alive, edge_label, next_id)


def _trim_leaves(edge_alive, vert_alive, degree, edge_verts, order):
    """Collapse (0-face, 1-face) free pairs to a fixpoint, in pop order."""
    vert_edges: dict[int, list[int]] = {}
    for e in np.flatnonzero(edge_alive):
        for v in edge_verts[e]:
            vert_edges.setdefault(int(v), []).append(int(e))
    stack = sorted(v for v, es in vert_edges.items() if vert_alive[v] and degree[v] == 1)
    while stack:
        v = stack.pop()
        if not vert_alive[v] or degree[v] != 1:
            continue
        e = next(e for e in vert_edges[v] if edge_alive[e])
        edge_alive[e] = False
        vert_alive[v] = False
        for w in edge_verts[e]:
            degree[w] -= 1
            if w != v and vert_alive[w] and degree[w] == 1:
                stack.append(int(w))


def _pop_order(front: FrontComplex) -> np.ndarray:
    cost = front.edge_cost
    return np.lexsort((np.arange(len(cost)), cost))


def morse_complex(front: FrontComplex) -> MorseResult:
    """Retract the front in increasing ``UE`` order.

    1-faces are popped once, ascending by cost with ties in lexicographic
    face order.  A popped 1-face with two surviving cofaces punches a new
    ascending manifold; with one it is collapsed into it; with none it is
    either a dangling edge (removed with its free 0-face) or an isthmus.
    Dangling edges left over at the end are trimmed.
    """
    if not front.is_closed_surface():
        raise RidgeError("front complex is not a closed surface")
    return _morse(_pop_order(front), front.edge_cofaces, front.edge_verts,
                  len(front.faces), len(front.verts))


# --- highest ridge ----------------------------------------------------------

@dataclass
class RidgeCurve:
    """A 1-complex on a front.  ``loop`` lists vertex coordinates (doubled)
    in cycle order when the curve is a simple closed loop."""

    edges: np.ndarray                 # (E, 3) doubled coords of 1-faces
    verts: np.ndarray                 # (V, 3) doubled coords of 0-faces
    edge_cost: np.ndarray             # (E,)
    labels: dict = field(default_factory=dict)
    loop: np.ndarray | None = None
    iterations: int = 0

    @property
    def points(self) -> np.ndarray:
        """Loop vertices in voxel units."""
        src = self.loop if self.loop is not None else self.verts
        return src / 2.0

    def to_complex(self) -> CubicalComplex:
        faces = [tuple(map(int, f)) for arr in (self.edges, self.verts) for f in arr]
        X = CubicalComplex.from_closed(faces)
        for e, c in zip(self.edges, self.edge_cost):
            X.cost[tuple(map(int, e))] = float(c)
        for e, l in self.labels.items():
            X.label[e] = l
        return X

    def vertex_degrees(self) -> dict:
        deg: dict = {}
        for e in self.edges:
            ax = int(np.flatnonzero(e & 1)[0])
            for s in (-1, 1):
                v = list(map(int, e))
                v[ax] += s
                deg[tuple(v)] = deg.get(tuple(v), 0) + 1
        return deg

    def is_simple_loop(self) -> bool:
        deg = self.vertex_degrees()
        if not deg or any(d != 2 for d in deg.values()):
            return False
        return self.to_complex().n_components() == 1

    def to_json(self) -> dict:
        pts = self.points
        n = len(pts)
        return {"vertices": pts.tolist(),
                "edges": [[i, (i + 1) % n] for i in range(n)] if self.loop is not None else []}


def _cycle_order(edge_ids, edge_verts) -> list[int] | None:
    """Vertex ids of a simple cycle in traversal order, or None."""
    adj: dict[int, list[int]] = {}
    for e in edge_ids:
        a, b = (int(x) for x in edge_verts[e])
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if not adj or any(len(n) != 2 for n in adj.values()):
        return None
    start = min(adj)
    out = [start]
    prev, cur = start, min(adj[start])
    while cur != start:
        out.append(cur)
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        prev, cur = cur, nxt
        if len(out) > len(adj):
            return None
    return out if len(out) == len(adj) else None


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def region_adjacency(edges, edge_regions, edge_cost):
    """Simplified complex of a labelled ridge set.

    Returns ``{(a, b): (pooled mean cost, [edge ids])}`` keyed by unordered
    region pairs ``a < b``; edges with both sides in one region are skipped.
    """
    segs: dict[tuple[int, int], list[int]] = {}
    for e in edges:
        a, b = edge_regions[e]
        if a == b:
            continue
        segs.setdefault((min(a, b), max(a, b)), []).append(e)
    return {k: (float(np.mean(edge_cost[v])), v) for k, v in segs.items()}


def ridge_regions(front: FrontComplex, ridge_edges: np.ndarray) -> tuple[np.ndarray, int]:
    """Label the 2-faces by connected component of the front minus the ridges.

    ``ridge_edges`` is a boolean mask over the front's 1-faces.
    """
    rows, cols = [], []
    for e, fs in enumerate(front.edge_cofaces):
        if not ridge_edges[e]:
            for f in fs[1:]:
                rows.append(fs[0])
                cols.append(f)
    n = len(front.faces)
    g = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, lab = csgraph.connected_components(g, directed=False)
    return lab.astype(np.int64), int(n_comp)


def highest_ridge(front: FrontComplex, morse: MorseResult | None = None) -> RidgeCurve:
    """Single highest ridge loop of the front.

    The residual ridges cut the front into regions.  Regions are merged one
    pair at a time across the shared ridge segment of least persistence:
    the segment's lowest ``UE`` (its saddle) minus the larger of the two
    regions' minimum ``UE`` (ties by region pair).  Ridge edges that stop separating
    two regions are dropped, as are dangling edges, until the separating
    edges form one simple loop.
    """
    if morse is None:
        morse = morse_complex(front)
    edge_cost = front.edge_cost
    cof = front.edge_cofaces
    ev = front.edge_verts
    alive = morse.edge_alive.copy()
    region, n_regions = ridge_regions(front, alive)
    uf = _UnionFind(max(n_regions, 1))
    rmin = np.full(max(n_regions, 1), np.inf)
    np.minimum.at(rmin, region, front.face_cost)
    sides = {}
    for e in np.flatnonzero(alive):
        labs = sorted({int(region[f]) for f in cof[e]})
        sides[int(e)] = (labs[0], labs[-1])
    degree = np.zeros(len(front.verts), dtype=np.int64)
    vert_edges: dict[int, list[int]] = {}
    for e in sides:
        for v in ev[e]:
            degree[v] += 1
            vert_edges.setdefault(int(v), []).append(e)

    segs: dict[tuple, set] = {}
    low: dict[tuple, float] = {}
    by_region: dict[int, set] = {}
    version: dict[tuple, int] = {}
    heap: list = []

    def key_of(e):
        a, b = uf.find(sides[e][0]), uf.find(sides[e][1])
        return (a, b) if a < b else (b, a)

    def push(k):
        version[k] = version.get(k, 0) + 1
        depth = low[k] - max(rmin[k[0]], rmin[k[1]])
        heapq.heappush(heap, (depth, k, version[k]))

    def drop_from_seg(e, k):
        segs[k].discard(e)
        if segs[k]:
            if edge_cost[e] <= low[k]:
                low[k] = min(edge_cost[x] for x in segs[k])
            push(k)
        else:
            del segs[k], low[k]
            version.pop(k, None)
            for r in k:
                by_region[r].discard(k)

    leaves: list[int] = []

    def kill(e):
        alive[e] = False
        for v in ev[e]:
            degree[v] -= 1
            if degree[v] == 1:
                leaves.append(int(v))

    def trim():
        while leaves:
            v = leaves.pop()
            if degree[v] != 1:
                continue
            e = next(e for e in vert_edges[v] if alive[e])
            k = key_of(e)
            kill(e)
            if k[0] != k[1]:
                drop_from_seg(e, k)

    for e in sorted(sides):
        k = key_of(e)
        if k[0] == k[1]:
            kill(e)
            continue
        segs.setdefault(k, set()).add(e)
        low[k] = min(low.get(k, np.inf), edge_cost[e])
        for r in k:
            by_region.setdefault(r, set()).add(k)
    for k in sorted(segs):
        push(k)
    trim()

    iterations = 0
    while True:
        iterations += 1
        cyc = None
        if not np.any((degree != 0) & (degree != 2)):
            cyc = _cycle_order(np.flatnonzero(alive), ev)
        if cyc is not None:
            break
        k = None
        while heap:
            _, cand, ver = heapq.heappop(heap)
            if version.get(cand) == ver:
                k = cand
                break
        if k is None:
            raise RidgeError(f"highest ridge did not converge after {iterations} iterations")
        a, b = k
        for e in sorted(segs.pop(k)):
            kill(e)
        del low[k]
        version.pop(k)
        by_region[a].discard(k)
        by_region[b].discard(k)
        uf.union(a, b)
        root, other = (a, b) if uf.find(a) == a else (b, a)
        rmin[root] = min(rmin[a], rmin[b])
        for old in sorted(by_region.get(root, ())):
            push(old)
        for old in sorted(by_region.pop(other, set())):
            x = old[0] if old[1] == other else old[1]
            new = (min(root, x), max(root, x))
            moved = segs.pop(old)
            s_old = low.pop(old)
            version.pop(old, None)
            by_region[x].discard(old)
            if new in segs:
                segs[new] |= moved
                low[new] = min(low[new], s_old)
            else:
                segs[new] = moved
                low[new] = s_old
                by_region[root].add(new)
                by_region[x].add(new)
            push(new)
        trim()

    ids = np.flatnonzero(alive)
    labels = {}
    for e in ids:
        labels[tuple(map(int, front.edges[e]))] = frozenset(uf.find(l) for l in sides[int(e)])
    return RidgeCurve(front.edges[ids], front.verts[np.unique(ev[ids])], edge_cost[ids],
                      labels, front.verts[cyc], iterations)

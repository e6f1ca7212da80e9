"""Curve graph over successive ridge loops, its minimum cut, and the boundary.

Ridge loops ``c_1 .. c_l`` from growing fronts are linked into one graph: each
loop is a cycle, and every vertex of ``c_i`` is joined to its nearest vertex
of ``c_{i+1}``.  The seed is the source (tied to all of ``c_1``) and ``c_l``
is the sink.  Where successive loops pile up at the surface rim the linking
edges are short, so the minimum cut runs along the rim.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cubical import CubicalComplex
from .volume import SeedPoint

INTRA, INTER, SOURCE = 0, 1, 2
_EPS = 1e-12


class BoundaryError(RuntimeError):
    pass


@dataclass
class CurveGraph:
    """Vertices ``0..n-1`` are curve points; vertex ``n`` is the source."""

    points: np.ndarray          # (n, 3) voxel units
    curve_index: np.ndarray     # (n,)
    edges: np.ndarray           # (m, 2) vertex ids
    cost: np.ndarray            # (m,)
    kind: np.ndarray            # (m,) INTRA / INTER / SOURCE
    source_point: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.points) + 1

    @property
    def source(self) -> int:
        return len(self.points)

    @property
    def n_curves(self) -> int:
        return int(self.curve_index.max()) + 1

    @property
    def sinks(self) -> np.ndarray:
        return np.flatnonzero(self.curve_index == self.n_curves - 1)

    def vertex_position(self, v: int) -> np.ndarray:
        return self.source_point if v == self.source else self.points[v]


def _loop_points(c) -> np.ndarray:
    pts = c.points if hasattr(c, "points") else c
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise BoundaryError("each curve must be an ordered loop of >= 3 points")
    return pts


def segment_distances(a0, a1, b0, b1) -> np.ndarray:
    """Pairwise minimum distances between segments ``a0a1`` (n) and ``b0b1`` (m)."""
    a0, a1, b0, b1 = (np.asarray(x, dtype=np.float64) for x in (a0, a1, b0, b1))
    d1 = (a1 - a0)[:, None, :]
    d2 = (b1 - b0)[None, :, :]
    r = a0[:, None, :] - b0[None, :, :]
    a = np.einsum("ijk,ijk->ij", d1, d1) * np.ones(r.shape[:2])
    e = np.einsum("ijk,ijk->ij", d2, d2) * np.ones(r.shape[:2])
    f = np.einsum("ijk,ijk->ij", d2, r)
    c = np.einsum("ijk,ijk->ij", d1, r)
    b = np.einsum("ijk,ijk->ij", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > _EPS, np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = np.where(e > _EPS, (b * s + f) / e, 0.0)
        s = np.where(t < 0, np.where(a > _EPS, np.clip(-c / a, 0, 1), 0.0), s)
        s = np.where(t > 1, np.where(a > _EPS, np.clip((b - c) / a, 0, 1), 0.0), s)
    t = np.clip(t, 0, 1)
    diff = r + s[..., None] * d1 - t[..., None] * d2
    return np.sqrt((diff ** 2).sum(-1))


def _segment_to_loop(pts, nxt, chunk=256) -> np.ndarray:
    """For each consecutive segment of loop ``pts``, distance to loop ``nxt``."""
    a0, a1 = pts, np.roll(pts, -1, axis=0)
    b0, b1 = nxt, np.roll(nxt, -1, axis=0)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s:s + chunk] = segment_distances(a0[s:s + chunk], a1[s:s + chunk], b0, b1).min(axis=1)
    return out


def build_curve_graph(curves, p: SeedPoint) -> CurveGraph:
    """Link ordered ridge loops into the cut graph."""
    if len(curves) < 2:
        raise BoundaryError(f"need at least 2 curves, got {len(curves)}")
    loops = [_loop_points(c) for c in curves]
    offsets = np.cumsum([0] + [len(c) for c in loops])
    n = int(offsets[-1])
    points = np.vstack(loops)
    curve_index = np.repeat(np.arange(len(loops)), [len(c) for c in loops])
    edges, cost, kind = [], [], []
    for i, pts in enumerate(loops):
        m = len(pts)
        ids = offsets[i] + np.arange(m)
        edges.append(np.stack([ids, offsets[i] + (np.arange(m) + 1) % m], axis=1))
        if i + 1 < len(loops):
            cost.append(_segment_to_loop(pts, loops[i + 1]))
            dist, nn = cKDTree(loops[i + 1]).query(pts)
            edges.append(np.stack([ids, offsets[i + 1] + nn], axis=1))
            kind += [INTRA] * m + [INTER] * m
            cost.append(dist)
        else:
            cost.append(np.zeros(m))
            kind += [INTRA] * m
    m1 = len(loops[0])
    edges.append(np.stack([np.full(m1, n), np.arange(m1)], axis=1))
    cost.append(np.full(m1, np.inf))
    kind += [SOURCE] * m1
    return CurveGraph(points, curve_index, np.vstack(edges).astype(np.int64),
                      np.concatenate(cost), np.asarray(kind, dtype=np.int8),
                      np.asarray(tuple(p), dtype=np.float64))


@dataclass
class CutResult:
    edges: np.ndarray          # indices into the graph's edge list
    cost: float
    source_side: np.ndarray    # bool per vertex
    connected: bool = True

    @property
    def size(self) -> int:
        return len(self.edges)


def max_flow_min_cut(n_vertices, edges, capacity, source, sinks) -> CutResult:
    """Exact s-t minimum cut of an undirected graph by shortest augmenting paths.

    All ``sinks`` are contracted into one terminal.  Returns the edges with
    exactly one endpoint on the source side of the residual graph.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    capacity = np.asarray(capacity, dtype=np.float64)
    sink_mask = np.zeros(n_vertices, dtype=bool)
    sink_mask[np.asarray(sinks, dtype=np.int64)] = True
    if sink_mask[source]:
        raise BoundaryError("source is also a sink")
    node = np.arange(n_vertices)
    t = n_vertices
    node[sink_mask] = t
    head, cap, adj = [], [], [[] for _ in range(n_vertices + 1)]
    for (u, v), c in zip(edges, capacity):
        a, b = int(node[u]), int(node[v])
        if a == b:
            continue
        adj[a].append(len(head))
        head.append(b)
        cap.append(float(c))
        adj[b].append(len(head))
        head.append(a)
        cap.append(float(c))
    cap = np.asarray(cap)

    def bfs():
        parent = [-1] * (n_vertices + 1)
        seen = [False] * (n_vertices + 1)
        seen[source] = True
        q = deque([source])
        while q:
            u = q.popleft()
            for arc in adj[u]:
                w = head[arc]
                if not seen[w] and cap[arc] > _EPS:
                    seen[w] = True
                    parent[w] = arc
                    if w == t:
                        return parent, seen
                    q.append(w)
        return None, seen

    while True:
        parent, seen = bfs()
        if parent is None:
            break
        path, w = [], t
        while w != source:
            arc = parent[w]
            path.append(arc)
            w = head[arc ^ 1]
        push = min(cap[a] for a in path)
        if not np.isfinite(push):
            raise BoundaryError("source and sink are joined by infinite capacity")
        for a in path:
            cap[a] -= push
            cap[a ^ 1] += push

    side = np.asarray([seen[int(node[v])] for v in range(n_vertices)])
    if seen[t]:
        raise BoundaryError("max-flow did not converge")
    if not _reachable(n_vertices, edges, source, sink_mask):
        return CutResult(np.zeros(0, dtype=np.int64), 0.0, side, connected=False)
    cut = np.flatnonzero(side[edges[:, 0]] != side[edges[:, 1]])
    total = float(capacity[cut].sum()) if len(cut) else 0.0
    return CutResult(cut, total, side)


def _reachable(n_vertices, edges, source, sink_mask) -> bool:
    adj = [[] for _ in range(n_vertices)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {source}
    q = deque([source])
    while q:
        u = q.popleft()
        if sink_mask[u]:
            return True
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                q.append(w)
    return False


def min_cut(G: CurveGraph) -> CutResult:
    """Minimum cut separating the seed from the last ridge loop."""
    return max_flow_min_cut(G.n_vertices, G.edges, G.cost, G.source, G.sinks)


def stopping_check(cut_cost: float, cut_size: int, T: float = 5.0) -> bool:
    """True when the mean cost per cut edge is below ``T``."""
    if cut_size < 1:
        raise ValueError("cut_size must be >= 1")
    return cut_cost / cut_size < T


# --- boundary assembly ------------------------------------------------------

@dataclass
class BoundaryCurve:
    """Closed polyline plus its rasterization onto lattice 1-faces.

    ``lattice`` holds the loop's voxel coordinates in order; consecutive
    entries (cyclically) differ by one unit step along one axis.
    """

    polyline: np.ndarray
    lattice: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def edges(self) -> np.ndarray:
        """1-faces of the loop in doubled coordinates."""
        a = self.lattice
        return a + np.roll(a, -1, axis=0)

    @property
    def vertices(self) -> np.ndarray:
        return 2 * self.lattice

    def to_complex(self) -> CubicalComplex:
        faces = [tuple(map(int, f)) for arr in (self.edges, self.vertices) for f in arr]
        return CubicalComplex.from_closed(faces)

    def voxels(self) -> np.ndarray:
        return np.unique(self.lattice, axis=0)

    def to_json(self) -> dict:
        return {"polyline": np.round(self.polyline, 6).tolist(),
                "lattice": self.lattice.tolist(),
                **({"meta": self.meta} if self.meta else {})}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundaryCurve":
        lat = np.asarray(obj["lattice"], dtype=np.int64).reshape(-1, 3)
        poly = np.asarray(obj.get("polyline", lat), dtype=np.float64).reshape(-1, 3)
        _check_lattice_loop(lat)
        return cls(poly, lat, dict(obj.get("meta", {})))


def _check_lattice_loop(lat: np.ndarray) -> None:
    if len(lat) < 4:
        raise BoundaryError("boundary loop needs at least 4 lattice points")
    steps = np.abs(np.diff(np.vstack([lat, lat[:1]]), axis=0)).sum(axis=1)
    if np.any(steps != 1):
        raise BoundaryError("lattice loop must move one unit step at a time")
    if len(np.unique(lat, axis=0)) != len(lat):
        raise BoundaryError("lattice loop is not simple")


def chain_points(points: np.ndarray, max_jump: float | None = None) -> np.ndarray:
    """Order points into a closed loop: nearest-unused steps, then 2-opt.

    Starts from the lexicographically smallest point.  Raises if a step (or
    the closing step) is longer than ``max_jump``, which signals several
    separate loops or a branched cut.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    n = len(pts)
    if n < 3:
        raise BoundaryError(f"degenerate cut: {n} distinct points")
    tree = cKDTree(pts)
    used = np.zeros(n, dtype=bool)
    order = [0]
    used[0] = True
    steps = []
    cur = 0
    for _ in range(n - 1):
        k = 8
        while True:
            d, idx = tree.query(pts[cur], k=min(k, n))
            d, idx = np.atleast_1d(d), np.atleast_1d(idx)
            free = ~used[idx]
            if free.any() or k >= n:
                break
            k *= 4
        if not free.any():
            free_ids = np.flatnonzero(~used)
            dd = np.linalg.norm(pts[free_ids] - pts[cur], axis=1)
            j = int(np.argmin(dd))
            nxt, dist = int(free_ids[j]), float(dd[j])
        else:
            j = int(np.argmax(free))
            nxt, dist = int(idx[j]), float(d[j])
        used[nxt] = True
        order.append(nxt)
        steps.append(dist)
        cur = nxt
    order = _two_opt(pts, np.asarray(order))
    ring = pts[order]
    steps = np.linalg.norm(ring - np.roll(ring, -1, axis=0), axis=1)
    if max_jump is None:
        max_jump = max(6.0, 5.0 * float(np.median(steps)))
    if steps.max() > max_jump:
        raise BoundaryError(f"chaining jump {steps.max():.2f} exceeds {max_jump:.2f}; "
                            "cut is not a single loop")
    return pts[order]


def _two_opt(pts: np.ndarray, order: np.ndarray, max_passes: int = 50) -> np.ndarray:
    """Reverse sub-tours while that shortens the closed tour."""
    order = order.copy()
    n = len(order)
    if n < 5:
        return order
    for _ in range(max_passes):
        improved = False
        for i in range(n - 2):
            p = pts[order]
            a, b = p[i], p[i + 1]
            c, d = p[i + 2:], np.roll(p, -1, axis=0)[i + 2:]
            if i == 0:
                c, d = c[:-1], d[:-1]
            gain = (np.linalg.norm(a - b) + np.linalg.norm(c - d, axis=1)
                    - np.linalg.norm(a - c, axis=1) - np.linalg.norm(b - d, axis=1))
            j = int(np.argmax(gain))
            if gain[j] > 1e-9:
                j += i + 2
                order[i + 1:j + 1] = order[i + 1:j + 1][::-1]
                improved = True
        if not improved:
            break
    return order


def _axis_path(a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """Unit axis steps from lattice point ``a`` to ``b`` (exclusive of ``a``)."""
    out = []
    cur = a.copy()
    for ax in range(3):
        while cur[ax] != b[ax]:
            cur = cur.copy()
            cur[ax] += 1 if b[ax] > cur[ax] else -1
            out.append(cur)
    return out


def _loop_erase(path: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    where: dict[tuple, int] = {}
    for q in path:
        key = tuple(int(c) for c in q)
        if key in where:
            cut = where[key]
            for r in out[cut + 1:]:
                del where[tuple(int(c) for c in r)]
            out = out[:cut + 1]
        else:
            where[key] = len(out)
            out.append(q)
    return out


def rasterize_loop(polyline: np.ndarray, pitch: float = 0.1) -> np.ndarray:
    """Lattice loop following a closed polyline, made simple by loop erasure."""
    poly = np.asarray(polyline, dtype=np.float64)
    closed = np.vstack([poly, poly[:1]])
    samples = [poly[:1]]
    for a, b in zip(closed[:-1], closed[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / pitch)))
        t = np.arange(1, n + 1)[:, None] / n
        samples.append(a + t * (b - a))
    lat = np.floor(np.vstack(samples) + 0.5).astype(np.int64)
    path = [lat[0]]
    for q in lat[1:]:
        if np.any(q != path[-1]):
            path.extend(_axis_path(path[-1], q))
    path.extend(_axis_path(path[-1], path[0])[:-1])
    # start where the walk passes only once, so erasure cannot swallow the loop
    keys = [tuple(int(c) for c in q) for q in path]
    seen: dict[tuple, int] = {}
    for key in keys:
        seen[key] = seen.get(key, 0) + 1
    once = np.array([seen[key] == 1 for key in keys])
    r = 0
    if once.any() and not once.all():
        # middle of the longest cyclic run of single-visit points
        o = np.roll(once, -int(np.argmin(once)))
        edges = np.flatnonzero(np.diff(np.concatenate([[0], o.astype(int), [0]])))
        lo, hi = edges[::2], edges[1::2]
        k = int(np.argmax(hi - lo))
        r = (int(np.argmin(once)) + (lo[k] + hi[k]) // 2) % len(path)
    path = path[r:] + path[:r]
    start = path[0]
    body = _loop_erase(path)
    out = _loop_erase(body + _axis_path(body[-1], start)[:-1])
    lat = np.asarray(out, dtype=np.int64)
    _check_lattice_loop(lat)
    return lat


def boundary_from_polyline(polyline, meta: dict | None = None) -> BoundaryCurve:
    poly = np.asarray(polyline, dtype=np.float64)
    lat = rasterize_loop(poly)
    length = float(np.linalg.norm(np.diff(np.vstack([poly, poly[:1]]), axis=0), axis=1).sum())
    if len(lat) < 0.5 * length:
        raise BoundaryError("rasterized boundary collapsed; polyline self-intersects")
    return BoundaryCurve(poly, lat, dict(meta or {}))


def assemble_boundary(G: CurveGraph, cut: CutResult) -> BoundaryCurve:
    """Closed boundary through the midpoints of the cut edges."""
    if cut.size < 3:
        raise BoundaryError(f"degenerate cut with {cut.size} edges")
    e = G.edges[cut.edges]
    a = np.array([G.vertex_position(int(u)) for u in e[:, 0]])
    b = np.array([G.vertex_position(int(v)) for v in e[:, 1]])
    mids = 0.5 * (a + b)
    poly = chain_points(mids)
    return boundary_from_polyline(poly, {"cut_cost": cut.cost, "cut_size": cut.size})

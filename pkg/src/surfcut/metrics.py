"""Voxel-set precision, recall, F-measure and GT coverage.

A result voxel counts as correct when its Euclidean distance to the other
set is strictly below ``epsilon``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import SurfaceMesh

DEFAULT_EPSILON = 3.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Scores:
    P: float
    R: float
    F: float
    GT_Cov: float


def _as_voxels(s) -> np.ndarray:
    if isinstance(s, (set, frozenset)):
        s = sorted(s)
    arr = np.asarray(s, dtype=np.int64).reshape(-1, 3)
    return np.unique(arr, axis=0)


def evaluate(S_r, S_gt, epsilon: float = DEFAULT_EPSILON) -> Scores:
    r, gt = _as_voxels(S_r), _as_voxels(S_gt)
    if not len(r) or not len(gt):
        raise MetricError("evaluate needs two non-empty voxel sets")
    d_r, _ = cKDTree(gt).query(r)
    d_gt, _ = cKDTree(r).query(gt)
    n_r = int(np.sum(d_r < epsilon))
    n_gt = int(np.sum(d_gt < epsilon))
    P = n_r / len(r)
    R = n_gt / len(gt)
    F = 2 * P * R / (P + R) if P + R > 0 else 0.0
    cov = (n_r + n_gt) / (len(r) + len(gt))
    return Scores(P, R, F, cov)


def voxelize_mesh(mesh: SurfaceMesh, pitch: float = 0.25, radius: float = 0.5) -> np.ndarray:
    """Voxels within ``radius`` of the mesh, via bilinear supersampling of each quad."""
    if mesh.n_quads == 0:
        return np.zeros((0, 3), dtype=np.int64)
    v = mesh.vertices[mesh.quads]                          # (Q, 4, 3)
    span = max(np.linalg.norm(v[:, 1] - v[:, 0], axis=1).max(),
               np.linalg.norm(v[:, 3] - v[:, 0], axis=1).max(), 1e-9)
    k = int(np.ceil(span / pitch)) + 1
    t = np.linspace(0.0, 1.0, k)
    s, u = np.meshgrid(t, t, indexing="ij")
    s, u = s.ravel()[None, :, None], u.ravel()[None, :, None]
    pts = ((1 - s) * (1 - u) * v[:, None, 0] + s * (1 - u) * v[:, None, 1]
           + s * u * v[:, None, 2] + (1 - s) * u * v[:, None, 3]).reshape(-1, 3)
    pts = np.unique(np.round(pts, 9), axis=0)
    base = np.floor(pts).astype(np.int64)
    cand = np.unique((base[:, None, :] + np.array(
        [[i, j, l] for i in (0, 1) for j in (0, 1) for l in (0, 1)])[None]).reshape(-1, 3), axis=0)
    d, _ = cKDTree(pts).query(cand, distance_upper_bound=radius + 1e-9)
    return cand[np.isfinite(d)]


@dataclass(frozen=True)
class MetricReport:
    surface: Scores | None
    boundary: Scores | None
    epsilon: float = DEFAULT_EPSILON

    def to_dict(self) -> dict:
        out = {"epsilon": self.epsilon}
        for name in ("surface", "boundary"):
            sc = getattr(self, name)
            out[name] = None if sc is None else {k: round(v, 6) for k, v in asdict(sc).items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        rows = [f"{'':10}{'P':>8}{'R':>8}{'F':>8}{'GT_Cov':>8}"]
        for name in ("surface", "boundary"):
            sc = getattr(self, name)
            if sc is not None:
                rows.append(f"{name:10}{sc.P:8.4f}{sc.R:8.4f}{sc.F:8.4f}{sc.GT_Cov:8.4f}")
        rows.append(f"epsilon = {self.epsilon:g}")
        return "\n".join(rows) + "\n"


def curvature_corners(polyline, count: int = 4, window: float = 4.0,
                      min_separation: float = 10.0) -> np.ndarray:
    """The ``count`` sharpest turns of a closed polyline.

    The loop is resampled at unit arc length, and the turning angle at each
    sample is measured between the chords to the points ``window`` before
    and after it.  Peaks closer than ``min_separation`` along the loop are
    suppressed.  Returns the corner points in loop order.
    """
    from scipy.ndimage import gaussian_filter1d
    p = np.asarray(polyline, dtype=np.float64)
    closed = np.vstack([p, p[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(np.floor(s[-1])), 8)
    t = np.linspace(0.0, s[-1], n, endpoint=False)
    q = np.column_stack([np.interp(t, s, closed[:, a]) for a in range(3)])
    q = gaussian_filter1d(q, 1.0, axis=0, mode="wrap")
    w = max(1, int(round(window)))
    a, b = np.roll(q, w, axis=0) - q, np.roll(q, -w, axis=0) - q
    cosang = (a * b).sum(1) / np.maximum(np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-12)
    turn = np.pi - np.arccos(np.clip(cosang, -1.0, 1.0))
    picked: list[int] = []
    for i in np.argsort(-turn, kind="stable"):
        if all(min(abs(i - j), n - abs(i - j)) >= min_separation for j in picked):
            picked.append(int(i))
            if len(picked) == count:
                break
    return q[sorted(picked)]

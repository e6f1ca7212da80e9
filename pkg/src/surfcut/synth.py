"""Synthetic free-boundary surfaces with ground truth.

Each kind is a parametric patch ``(u, v) -> xyz`` over a masked parameter
grid.  phi is 0 on voxels within distance 1 of the patch and 1 elsewhere;
noise is added separately with :func:`add_gaussian_noise`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh import SurfaceMesh
from .volume import ScalarVolume, VolumeError, add_gaussian_noise, write_svol

KINDS = ("trimmed_plane", "cut_sphere", "random_heightfield")
MARGIN = 5
SAMPLE_PITCH = 0.125
POLYLINE_PITCH = 0.5
BAND = 1.0
SURFACE_RADIUS = 0.5
BOUNDARY_RADIUS = np.sqrt(3) / 2


class SynthError(ValueError):
    pass


@dataclass
class GroundTruth:
    surface_voxels: np.ndarray         # (K, 3) int
    boundary_voxels: np.ndarray        # (M, 3) int
    boundary_polyline: np.ndarray      # (L, 3) float, closed loop in order
    mesh: SurfaceMesh
    kind: str = ""
    params: dict = field(default_factory=dict)
    corners: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params,
                "surface_voxels": self.surface_voxels.tolist(),
                "boundary_voxels": self.boundary_voxels.tolist(),
                "boundary_polyline": np.round(self.boundary_polyline, 6).tolist(),
                "corners": np.round(self.corners, 6).tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(np.asarray(obj["surface_voxels"], dtype=np.int64).reshape(-1, 3),
                   np.asarray(obj["boundary_voxels"], dtype=np.int64).reshape(-1, 3),
                   np.asarray(obj["boundary_polyline"], dtype=np.float64).reshape(-1, 3),
                   SurfaceMesh(np.zeros((0, 3)), np.zeros((0, 4))),
                   obj.get("kind", ""), obj.get("params", {}),
                   np.asarray(obj.get("corners", []), dtype=np.float64).reshape(-1, 3))


def _defaults(kind: str, dims, params: dict, rng) -> dict:
    n = min(dims)
    c = [float(d // 2) for d in dims]
    p = {"center": c}
    if kind == "trimmed_plane":
        p.update(radius=0.32 * n, tilt=0.0)
    elif kind == "cut_sphere":
        p.update(radius=0.38 * n, half_width=0.24 * n)
    elif kind == "random_heightfield":
        p.update(radius=0.32 * n, n_bumps=4, amplitude=0.06 * n, width=0.15 * n)
    else:
        raise SynthError(f"unknown kind {kind!r}; expected one of {KINDS}")
    p.update(params or {})
    if kind == "random_heightfield" and "bumps" not in p:
        r = p["radius"]
        xy = rng.uniform(-r, r, size=(int(p["n_bumps"]), 2))
        amp = rng.uniform(-1, 1, size=int(p["n_bumps"])) * p["amplitude"]
        p["bumps"] = [[float(x), float(y), float(a)] for (x, y), a in zip(xy, amp)]
    if kind == "trimmed_plane" and p["tilt"] and "normal" not in p:
        ang = rng.uniform(0, 2 * np.pi)
        t = np.deg2rad(p["tilt"])
        p["normal"] = [float(np.sin(t) * np.cos(ang)), float(np.sin(t) * np.sin(ang)),
                       float(np.cos(t))]
    return p


def _plane_basis(p: dict):
    """Orthonormal in-plane axes; the untilted plane uses x and y."""
    nrm = np.asarray(p.get("normal", [0.0, 0.0, 1.0]), dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    if abs(abs(nrm[2]) - 1.0) < 1e-12:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    e1 = np.cross(nrm, [0.0, 0.0, 1.0])
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(nrm, e1)


def _patch(kind: str, p: dict, pitch: float):
    """Grid samples of the patch: points (H, W, 3) and validity mask (H, W)."""
    cx, cy, cz = p["center"]
    if kind == "cut_sphere":
        a, R = p["half_width"], p["radius"]
        u = np.arange(-a, a + 1e-9, pitch)
        X, Y = np.meshgrid(u, u, indexing="ij")
        Z = -np.sqrt(np.maximum(R * R - X ** 2 - Y ** 2, 0))
        pts = np.stack([cx + X, cy + Y, cz + Z], axis=-1)
        return pts, np.ones(X.shape, bool)
    r = p["radius"]
    u = np.arange(-np.ceil(r), np.ceil(r) + 1e-9, pitch)
    X, Y = np.meshgrid(u, u, indexing="ij")
    mask = X ** 2 + Y ** 2 <= r * r + 1e-9
    if kind == "trimmed_plane":
        e1, e2 = _plane_basis(p)
        pts = np.asarray(p["center"]) + X[..., None] * e1 + Y[..., None] * e2
        return pts, mask
    Z = np.zeros_like(X)
    w = p["width"]
    for bx, by, amp in p["bumps"]:
        Z += amp * np.exp(-((X - bx) ** 2 + (Y - by) ** 2) / (2 * w * w))
    return np.stack([cx + X, cy + Y, cz + Z], axis=-1), mask


def _boundary(kind: str, p: dict, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    """Ordered closed boundary polyline and corner points."""
    cx, cy, cz = p["center"]
    if kind == "cut_sphere":
        a, R = p["half_width"], p["radius"]
        s = np.arange(-a, a, pitch)
        sides = [np.stack([s, np.full_like(s, -a)], 1), np.stack([np.full_like(s, a), s], 1),
                 np.stack([-s, np.full_like(s, a)], 1), np.stack([np.full_like(s, -a), -s], 1)]
        xy = np.vstack(sides)
        z = -np.sqrt(R * R - (xy ** 2).sum(1))
        pts = np.column_stack([cx + xy[:, 0], cy + xy[:, 1], cz + z])
        corners = np.array([[cx + sx * a, cy + sy * a, cz - np.sqrt(R * R - 2 * a * a)]
                            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])
        return pts, corners
    r = p["radius"]
    n = max(64, int(np.ceil(2 * np.pi * r / pitch)))
    t = 2 * np.pi * np.arange(n) / n
    X, Y = r * np.cos(t), r * np.sin(t)
    if kind == "trimmed_plane":
        e1, e2 = _plane_basis(p)
        origin = np.asarray(p["center"], dtype=float)
        return origin + X[:, None] * e1 + Y[:, None] * e2, np.zeros((0, 3))
    Z = np.zeros_like(X)
    w = p["width"]
    for bx, by, amp in p["bumps"]:
        Z += amp * np.exp(-((X - bx) ** 2 + (Y - by) ** 2) / (2 * w * w))
    return np.column_stack([cx + X, cy + Y, cz + Z]), np.zeros((0, 3))


def _voxels_near(points: np.ndarray, radius: float, dims) -> np.ndarray:
    """All voxels within ``radius`` of a point sample, sorted lexicographically."""
    lo = np.maximum(np.floor(points.min(0) - radius).astype(int), 0)
    hi = np.minimum(np.ceil(points.max(0) + radius).astype(int), np.asarray(dims) - 1)
    grid = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                indexing="ij"), -1).reshape(-1, 3)
    d, _ = cKDTree(points).query(grid, distance_upper_bound=radius + 1e-9)
    return grid[np.isfinite(d)]


def _mesh_from_patch(pts: np.ndarray, mask: np.ndarray) -> SurfaceMesh:
    H, W = mask.shape
    ids = -np.ones((H, W), dtype=np.int64)
    ids[mask] = np.arange(mask.sum())
    q = np.stack([ids[:-1, :-1], ids[1:, :-1], ids[1:, 1:], ids[:-1, 1:]], -1).reshape(-1, 4)
    q = q[(q >= 0).all(1)]
    return SurfaceMesh(pts[mask], q)


def generate_surface(kind: str, dims, params: dict | None = None, rng_seed: int = 0):
    """Clean phi volume and ground truth for one synthetic surface."""
    kind = kind.replace("-", "_")
    dims = tuple(int(d) for d in (dims if np.ndim(dims) else (dims,) * 3))
    if any(d < 2 * MARGIN + 3 for d in dims):
        raise SynthError(f"dims {dims} too small for a {MARGIN}-voxel margin")
    rng = np.random.default_rng(rng_seed)
    p = _defaults(kind, dims, dict(params or {}), rng)
    pts, mask = _patch(kind, p, SAMPLE_PITCH)
    samples = pts[mask]
    bpts, corners = _boundary(kind, p, SAMPLE_PITCH)
    lo, hi = samples.min(0), samples.max(0)
    if np.any(lo - BAND < MARGIN) or np.any(hi + BAND > np.asarray(dims) - 1 - MARGIN):
        raise SynthError(f"{kind} surface exceeds the {MARGIN}-voxel margin in dims {dims}")
    samples = np.vstack([samples, bpts])

    phi = np.ones(dims)
    band = _voxels_near(samples, BAND, dims)
    phi[tuple(band.T)] = 0.0
    surface = _voxels_near(samples, SURFACE_RADIUS, dims)
    boundary = _voxels_near(bpts, BOUNDARY_RADIUS, dims)
    mesh_pts, mesh_mask = _patch(kind, p, 1.0)
    gt = GroundTruth(surface, boundary, _boundary(kind, p, POLYLINE_PITCH)[0],
                     _mesh_from_patch(mesh_pts, mesh_mask), kind, _jsonable(p), corners)
    return ScalarVolume(phi), gt


def _jsonable(p: dict) -> dict:
    out = {}
    for k, v in p.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (list, tuple)):
            v = [list(map(float, x)) if isinstance(x, (list, tuple)) else float(x) for x in v]
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


def write_dataset(out_dir, kind: str, dims, sigma: float = 0.1, rng_seed: int = 0,
                  params: dict | None = None, name: str = "case") -> dict:
    """Write ``<name>_phi.svol``, ``<name>_gt.json`` and return a manifest entry.

    An empty ``name`` gives plain ``phi.svol`` and ``gt.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phi, gt = generate_surface(kind, dims, params, rng_seed)
    phi = add_gaussian_noise(phi, sigma, rng_seed)
    pre = f"{name}_" if name else ""
    vol_name, gt_name = f"{pre}phi.svol", f"{pre}gt.json"
    write_svol(out_dir / vol_name, phi)
    obj = gt.to_json()
    obj.update(dims=list(phi.dims), sigma=float(sigma), rng_seed=int(rng_seed))
    (out_dir / gt_name).write_text(json.dumps(obj, separators=(",", ":"), sort_keys=True))
    return {"name": name, "kind": gt.kind, "volume": vol_name, "gt": gt_name,
            "dims": list(phi.dims), "sigma": float(sigma), "rng_seed": int(rng_seed)}


def write_manifest(path, entries: list[dict]) -> None:
    Path(path).write_text(json.dumps({"cases": entries}, indent=2, sort_keys=True) + "\n")


def read_gt(path) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text()))


def on_surface_seeds(gt: GroundTruth, count: int, rng_seed: int = 0, margin: float = 4.0):
    """Random ground-truth surface voxels at least ``margin`` from the boundary."""
    from .volume import SeedPoint
    d, _ = cKDTree(gt.boundary_polyline).query(gt.surface_voxels)
    pool = gt.surface_voxels[d >= margin]
    if len(pool) == 0:
        raise SynthError("no surface voxels far enough from the boundary")
    rng = np.random.default_rng(rng_seed)
    pick = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
    return [SeedPoint(*map(int, pool[i])) for i in pick]


__all__ = ["KINDS", "GroundTruth", "SynthError", "generate_surface", "write_dataset",
           "write_manifest", "read_gt", "on_surface_seeds", "VolumeError"]

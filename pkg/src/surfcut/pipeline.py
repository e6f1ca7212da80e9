"""End-to-end extraction: fronts, ridges, boundary cut, surface."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import BoundaryCurve, assemble_boundary, build_curve_graph, min_cut, stopping_check
from .fmm import FmmResult, fast_march
from .mesh import SurfaceMesh
from .metrics import evaluate, voxelize_mesh
from .ridge import RidgeCurve, build_front_complex, highest_ridge
from .valley import complex_to_mesh, valley_extract
from .volume import ScalarVolume, SeedPoint, propose_seeds

log = logging.getLogger(__name__)

CLEAN = "clean"
DEGRADED_DOMAIN = "degraded:domain"
DEGRADED_MAX_FRONTS = "degraded:max_fronts"


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class SurfCutParams:
    delta_D: float = 20.0
    T: float = 5.0
    rho: float = 0.02
    max_fronts: int = 64
    cover_tol: float = 2.0
    phi_scale: float = 10.0
    # automatic seeding
    max_seeds: int = 8
    seed_percentile: float = 5.0
    seed_suppression: float = 10.0
    seed_smoothing: float = 2.0
    dedup_cov: float = 0.8

    def __post_init__(self):
        if not self.delta_D > 0:
            raise ValueError(f"delta_D must be > 0, got {self.delta_D}")
        if not self.T > 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.max_fronts < 2:
            raise ValueError(f"max_fronts must be >= 2, got {self.max_fronts}")
        if not self.phi_scale > 0:
            raise ValueError(f"phi_scale must be > 0, got {self.phi_scale}")
        if self.seed_smoothing < 0:
            raise ValueError(f"seed_smoothing must be >= 0, got {self.seed_smoothing}")
        if not self.cover_tol > 0:
            raise ValueError(f"cover_tol must be > 0, got {self.cover_tol}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricHooks:
    """Intermediate products and diagnostics of one run."""
    status: str
    fmm: FmmResult
    curves: list[RidgeCurve]
    levels: list[float]
    cut_cost: float
    cut_size: int
    timings: dict = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return self.status == CLEAN

    def summary(self) -> dict:
        return {"status": self.status, "n_curves": len(self.curves),
                "levels": [float(x) for x in self.levels],
                "cut_cost": float(self.cut_cost), "cut_size": int(self.cut_size),
                "timings": {k: round(v, 3) for k, v in self.timings.items()}}


def march(phi: ScalarVolume, p: SeedPoint, params: SurfCutParams) -> FmmResult:
    data = phi.data if isinstance(phi, ScalarVolume) else np.asarray(phi, dtype=np.float64)
    return fast_march(data * params.phi_scale, p, rho=params.rho * params.phi_scale)


def extract_boundary(res: FmmResult, params: SurfCutParams):
    """Ridge loops at ``k * delta_D`` until the cut criterion or a guardrail fires."""
    curves, levels = [], []
    status, cut, G = DEGRADED_MAX_FRONTS, None, None
    for k in range(1, params.max_fronts + 1):
        D = k * params.delta_D
        if D >= res.max_accepted:
            status = DEGRADED_DOMAIN
            break
        front = build_front_complex(res, D)
        if front.touches_domain_boundary:
            status = DEGRADED_DOMAIN
            break
        curves.append(highest_ridge(front))
        levels.append(D)
        if len(curves) < 2:
            continue
        G = build_curve_graph(curves, res.seed)
        cut = min_cut(G)
        log.debug("D=%g cut cost %.3f over %d edges", D, cut.cost, cut.size)
        if cut.size and stopping_check(cut.cost, cut.size, params.T):
            status = CLEAN
            break
    if G is None:
        raise PipelineError(f"fewer than two ridge curves before stop ({status})")
    if status != CLEAN:
        log.warning("boundary search stopped without the cut criterion: %s", status)
    return assemble_boundary(G, cut), curves, levels, status, cut


def surfcut(phi: ScalarVolume, p: SeedPoint, params: SurfCutParams | None = None):
    """Boundary curve, surface mesh and run diagnostics for one seed."""
    params = params or SurfCutParams()
    p = p if isinstance(p, SeedPoint) else SeedPoint(*p)
    dims = phi.dims if isinstance(phi, ScalarVolume) else np.shape(phi)
    p.check_inside(dims)
    t = {}
    t0 = time.perf_counter()
    res = march(phi, p, params)
    t["fmm"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    bc, curves, levels, status, cut = extract_boundary(res, params)
    t["boundary"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    mesh = surface_from_boundary(res, bc)
    t["surface"] = time.perf_counter() - t0
    bc.meta.update(status=status)
    return bc, mesh, MetricHooks(status, res, curves, levels, cut.cost, cut.size, t)


def surface_from_boundary(res: FmmResult, boundary: BoundaryCurve) -> SurfaceMesh:
    return complex_to_mesh(valley_extract(res, boundary), boundary)


def _mesh_voxels(mesh: SurfaceMesh) -> np.ndarray:
    return voxelize_mesh(mesh)


def surfcut_auto(phi: ScalarVolume, params: SurfCutParams | None = None, threads: int = 1):
    """Run from every proposed seed and drop near-duplicate surfaces.

    A result is dropped when its voxelized surface has GT_Cov >= ``dedup_cov``
    against a result kept earlier in seed order.
    """
    params = params or SurfCutParams()
    seeds = propose_seeds(phi, params.max_seeds, params.seed_percentile,
                          params.seed_suppression, params.seed_smoothing)
    if not seeds:
        return []

    def run(s):
        try:
            bc, mesh, _ = surfcut(phi, s, params)
            return bc, mesh
        except Exception as exc:  # one bad seed must not sink the batch
            log.warning("seed %s failed: %s", tuple(s), exc)
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    kept, kept_vox = [], []
    for s, r in zip(seeds, results):
        if r is None or r[1].n_quads == 0:
            continue
        vox = _mesh_voxels(r[1])
        if any(evaluate(vox, v).GT_Cov >= params.dedup_cov for v in kept_vox):
            continue
        kept.append((s, r[0], r[1]))
        kept_vox.append(vox)
    return kept

"""Dense 3D scalar volumes, noise injection, seed proposal and ``.svol`` I/O.

Arrays are indexed ``data[i, j, k]`` with ``i`` along x.  On disk the voxels
are stored x-fastest (Fortran order), which is also the order used for
voxel linear indices (``i + nx * (j + ny * k)``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

MAX_VOXELS = 1 << 31


class VolumeError(ValueError):
    """Raised for malformed volumes or invalid volume parameters."""


@dataclass(frozen=True)
class ScalarVolume:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise VolumeError(f"volume must be 3D, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise VolumeError("volume values must be finite and >= 0")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __getitem__(self, idx):
        return self.data[idx]

    def linear_index(self, ijk) -> int:
        nx, ny, _ = self.dims
        i, j, k = ijk
        return int(i + nx * (j + ny * k))

    def flat(self) -> np.ndarray:
        """Values in x-fastest order."""
        return self.data.ravel(order="F")


def _check_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise VolumeError(f"expected 3 dims, got {dims}")
    if any(d < 3 for d in dims):
        raise VolumeError(f"each dim must be >= 3, got {dims}")
    if dims[0] * dims[1] * dims[2] >= MAX_VOXELS:
        raise VolumeError(f"dims {dims} overflow the voxel index range")
    return dims


def new_volume(dims, fill: float = 0.0) -> ScalarVolume:
    dims = _check_dims(dims)
    if not np.isfinite(fill) or fill < 0:
        raise VolumeError(f"fill must be finite and >= 0, got {fill}")
    return ScalarVolume(np.full(dims, float(fill)))


def add_gaussian_noise(v: ScalarVolume, sigma: float, rng_seed: int) -> ScalarVolume:
    """Add N(0, sigma^2) noise and clamp at zero so the result stays a valid cost."""
    if sigma < 0:
        raise VolumeError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return v
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, sigma, size=v.dims)
    return ScalarVolume(np.maximum(v.data + noise, 0.0))


@dataclass(frozen=True, order=True)
class SeedPoint:
    i: int
    j: int
    k: int

    def __iter__(self):
        return iter((self.i, self.j, self.k))

    def as_array(self) -> np.ndarray:
        return np.array([self.i, self.j, self.k], dtype=np.float64)

    def check_inside(self, dims) -> None:
        for c, n in zip(self, dims):
            if not 0 < c < n - 1:
                raise VolumeError(f"seed {tuple(self)} is not strictly inside dims {tuple(dims)}")


def propose_seeds(phi: ScalarVolume, max_seeds: int, percentile: float,
                  suppression_radius: float, smoothing: float = 0.0) -> list[SeedPoint]:
    """Greedy non-max-suppressed local minima of ``phi``.

    A voxel qualifies when it is <= all 26 neighbours and strictly below at
    least one of them (plateau-aware minimum), lies off the outermost voxel
    layer, and is strictly below the given percentile of ``phi``.  With
    ``smoothing > 0`` the minima are taken on a Gaussian-blurred copy, which
    pulls seeds away from the rims of low regions.
    """
    if not 0 < percentile < 100:
        raise VolumeError(f"percentile must be in (0, 100), got {percentile}")
    if smoothing < 0:
        raise VolumeError(f"smoothing must be >= 0, got {smoothing}")
    data = phi.data
    if smoothing > 0:
        data = ndimage.gaussian_filter(data, smoothing, mode="nearest")
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    lo = ndimage.minimum_filter(data, footprint=footprint, mode="nearest")
    hi = ndimage.maximum_filter(data, footprint=footprint, mode="nearest")
    cand = (data <= lo) & (data < hi) & (data < np.percentile(data, percentile))
    cand[[0, -1], :, :] = False
    cand[:, [0, -1], :] = False
    cand[:, :, [0, -1]] = False

    idx = np.argwhere(cand)
    if len(idx) == 0:
        return []
    nx, ny, _ = phi.dims
    lin = idx[:, 0] + nx * (idx[:, 1] + ny * idx[:, 2])
    order = np.lexsort((lin, data[cand]))
    chosen: list[np.ndarray] = []
    r2 = float(suppression_radius) ** 2
    for n in order:
        pt = idx[n]
        if all(np.sum((pt - q) ** 2) >= r2 for q in chosen):
            chosen.append(pt)
            if len(chosen) >= max_seeds:
                break
    return [SeedPoint(*(int(c) for c in pt)) for pt in chosen]


# --- .svol format -----------------------------------------------------------
# One UTF-8 JSON header line {"dims":[nx,ny,nz],"dtype":"f32le"} + "\n",
# then nx*ny*nz little-endian float32 values, x-fastest.

def svol_bytes(v: ScalarVolume) -> bytes:
    header = json.dumps({"dims": list(v.dims), "dtype": "f32le"}, separators=(",", ":"))
    body = v.flat().astype("<f4").tobytes()
    return header.encode("utf-8") + b"\n" + body


def write_svol(path, v: ScalarVolume) -> None:
    Path(path).write_bytes(svol_bytes(v))


def parse_svol(raw: bytes) -> ScalarVolume:
    nl = raw.find(b"\n")
    if nl < 0:
        raise VolumeError("missing .svol header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
        dims = tuple(int(d) for d in header["dims"])
        dtype = header["dtype"]
    except (ValueError, KeyError, TypeError) as exc:
        raise VolumeError(f"bad .svol header: {exc}") from exc
    if dtype != "f32le":
        raise VolumeError(f"unsupported dtype {dtype!r}")
    dims = _check_dims(dims)
    body = raw[nl + 1:]
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(body) != expected:
        raise VolumeError(f"expected {expected} data bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f4")
    return ScalarVolume(flat.reshape(dims, order="F").astype(np.float64))


def read_svol(path) -> ScalarVolume:
    return parse_svol(Path(path).read_bytes())

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surfcut.volume import (ScalarVolume, SeedPoint, VolumeError, add_gaussian_noise,
                            new_volume, parse_svol, propose_seeds, read_svol, svol_bytes,
                            write_svol)


@pytest.mark.parametrize("dims, fill", [((3, 3, 3), 1.0), ((3, 3, 3), 0.0), ((4, 5, 6), 2.5)])
def test_new_volume(dims, fill):
    v = new_volume(dims, fill)
    assert v.dims == dims
    assert v.size == np.prod(dims)
    assert np.all(v.data == fill)


@pytest.mark.parametrize("dims, fill", [((0, 3, 3), 1.0), ((2, 3, 3), 1.0), ((3, 3, 3), -1.0),
                                        ((3000, 3000, 3000), 0.0)])
def test_new_volume_rejects(dims, fill):
    with pytest.raises(VolumeError):
        new_volume(dims, fill)


def test_volume_rejects_negative_and_nan():
    with pytest.raises(VolumeError):
        ScalarVolume(-np.ones((3, 3, 3)))
    with pytest.raises(VolumeError):
        ScalarVolume(np.full((3, 3, 3), np.nan))


def test_volume_is_read_only():
    v = new_volume((3, 3, 3), 1.0)
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 2.0


def _band(n=40):
    data = np.ones((n, n, n))
    data[:, :, n // 2 - 1:n // 2 + 2] = 0.0
    return ScalarVolume(data)


def test_noise_sigma_zero_is_identity():
    v = _band()
    out = add_gaussian_noise(v, 0.0, 3)
    assert np.array_equal(out.data, v.data)


def test_noise_variance_matches_sigma():
    v = _band()
    out = add_gaussian_noise(v, 0.1, 11)
    unclamped = v.data == 1.0
    var = np.var(out.data[unclamped] - v.data[unclamped])
    assert abs(var - 0.01) <= 0.1 * 0.01
    assert np.all(out.data >= 0)


def test_noise_is_deterministic():
    v = _band(20)
    a = add_gaussian_noise(v, 0.1, 5)
    b = add_gaussian_noise(v, 0.1, 5)
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(a.data, add_gaussian_noise(v, 0.1, 6).data)


def test_noise_rejects_negative_sigma():
    with pytest.raises(VolumeError):
        add_gaussian_noise(_band(10), -0.1, 0)


def test_seeds_uniform_volume_empty():
    assert propose_seeds(new_volume((10, 10, 10), 1.0), 5, 50, 3) == []


def test_seeds_single_zero_voxel():
    data = np.ones((9, 9, 9))
    data[4, 3, 5] = 0.0
    assert propose_seeds(ScalarVolume(data), 5, 50, 3) == [SeedPoint(4, 3, 5)]


def _two_bands():
    data = np.ones((40, 40, 50))
    data[:, :, 14:17] = 0.0
    data[:, :, 34:37] = 0.0
    return ScalarVolume(data)


def _brute_local_minima(data):
    n = data.shape
    out = []
    for i in range(1, n[0] - 1):
        for j in range(1, n[1] - 1):
            for k in range(1, n[2] - 1):
                nb = data[i - 1:i + 2, j - 1:j + 2, k - 1:k + 2].copy().ravel()
                centre = nb[13]
                nb = np.delete(nb, 13)
                if centre <= nb.min() and centre < nb.max():
                    out.append((i, j, k))
    return out


def test_seeds_two_bands_one_each():
    phi = _two_bands()
    minima = set(_brute_local_minima(phi.data))
    seeds = propose_seeds(phi, 1000, 50, 5)
    assert len(seeds) >= 2
    assert all(tuple(s) in minima for s in seeds)
    bands = {0 if s.k < 25 else 1 for s in seeds}
    assert bands == {0, 1}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 6.0))
def test_seeds_respect_suppression_radius(seed, radius):
    rng = np.random.default_rng(seed)
    phi = ScalarVolume(rng.uniform(0, 1, (12, 12, 12)))
    seeds = propose_seeds(phi, 20, 30, radius)
    pts = np.array([tuple(s) for s in seeds], dtype=float)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            assert np.linalg.norm(pts[a] - pts[b]) >= radius
    vals = [phi.data[tuple(s)] for s in seeds]
    assert vals == sorted(vals)
    assert all(0 < c < 11 for s in seeds for c in s)


def test_svol_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.uniform(0, 5, (4, 5, 6)).astype(np.float32).astype(np.float64)
    v = ScalarVolume(data)
    path = tmp_path / "v.svol"
    write_svol(path, v)
    raw = path.read_bytes()
    back = read_svol(path)
    assert np.array_equal(back.data, v.data)
    assert svol_bytes(back) == raw


def test_svol_layout_is_x_fastest():
    data = np.zeros((3, 4, 5))
    data[1, 0, 0] = 1.0
    data[0, 1, 0] = 2.0
    raw = svol_bytes(ScalarVolume(data))
    header, body = raw.split(b"\n", 1)
    assert header == b'{"dims":[3,4,5],"dtype":"f32le"}'
    vals = np.frombuffer(body, dtype="<f4")
    assert vals[1] == 1.0 and vals[3] == 2.0


@pytest.mark.parametrize("raw", [b"no header", b'{"dims":[3,3,3],"dtype":"f64"}\n' + bytes(27 * 8),
                                 b'{"dims":[3,3,3],"dtype":"f32le"}\n' + bytes(10),
                                 b'{"dims":[3,3],"dtype":"f32le"}\n'])
def test_svol_rejects_malformed(raw):
    with pytest.raises(VolumeError):
        parse_svol(raw)

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surfcut.mesh import SurfaceMesh
from surfcut.metrics import MetricError, MetricReport, evaluate, voxelize_mesh
from oracles import brute_set_distances


def plane(n=10, z=0):
    return np.array([[i, j, z] for i in range(n) for j in range(n)])


def brute_scores(A, B, eps):
    dA, dB = brute_set_distances(A, B), brute_set_distances(B, A)
    nA, nB = np.sum(dA < eps), np.sum(dB < eps)
    P, R = nA / len(A), nB / len(B)
    F = 2 * P * R / (P + R) if P + R else 0.0
    return P, R, F, (nA + nB) / (len(A) + len(B))


def test_identity():
    s = evaluate(plane(), plane())
    assert (s.P, s.R, s.F, s.GT_Cov) == (1, 1, 1, 1)


def test_far_sets():
    s = evaluate(plane(), plane(z=10))
    assert (s.P, s.R, s.F, s.GT_Cov) == (0, 0, 0, 0)


@pytest.mark.parametrize("shift,expect", [(2, 1.0), (4, 0.0)])
def test_plane_shift(shift, expect):
    A, B = plane(), plane(z=shift)
    s = evaluate(A, B, 3)
    assert np.allclose([s.P, s.R, s.F, s.GT_Cov], brute_scores(A, B, 3))
    assert np.allclose([s.P, s.R, s.F, s.GT_Cov], expect)


def test_strict_inequality():
    s = evaluate(plane(), plane(z=3), 3)
    assert s.P == 0.0


def test_empty_raises():
    with pytest.raises(MetricError):
        evaluate(np.zeros((0, 3)), plane())
    with pytest.raises(MetricError):
        evaluate(plane(), [])


def test_accepts_python_sets():
    s = evaluate({(0, 0, 0), (1, 0, 0)}, [[0, 0, 0]])
    assert s.P == 1.0 and s.R == 1.0


pts = st.lists(st.tuples(*[st.integers(0, 8)] * 3), min_size=1, max_size=25)


@settings(max_examples=60, deadline=None)
@given(pts, pts, st.floats(0.5, 5.0), st.tuples(*[st.integers(-20, 20)] * 3))
def test_matches_brute_force_and_properties(a, b, eps, t):
    A, B = np.unique(np.array(a), axis=0), np.unique(np.array(b), axis=0)
    s = evaluate(A, B, eps)
    assert np.allclose([s.P, s.R, s.F, s.GT_Cov], brute_scores(A, B, eps))
    r = evaluate(B, A, eps)
    assert np.isclose(s.P, r.R) and np.isclose(s.GT_Cov, r.GT_Cov)
    u = evaluate(A + t, B + t, eps)
    assert np.allclose([s.P, s.R, s.F, s.GT_Cov], [u.P, u.R, u.F, u.GT_Cov])
    assert all(0 <= v <= 1 for v in (s.P, s.R, s.F, s.GT_Cov))


def fine_oracle(mesh, pitch=1 / 32, radius=0.5):
    out = set()
    for q in mesh.vertices[mesh.quads]:
        t = np.arange(0, 1 + 1e-9, pitch)
        s, u = np.meshgrid(t, t, indexing="ij")
        s, u = s.ravel()[:, None], u.ravel()[:, None]
        p = (1 - s) * (1 - u) * q[0] + s * (1 - u) * q[1] + s * u * q[2] + (1 - s) * u * q[3]
        lo, hi = np.floor(p.min(0) - 1).astype(int), np.ceil(p.max(0) + 1).astype(int)
        g = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                 indexing="ij"), -1).reshape(-1, 3)
        d = brute_set_distances(g, p)
        out |= {tuple(v) for v in g[d <= radius + 1e-9].tolist()}
    return out


def test_voxelize_unit_quad():
    m = SurfaceMesh([[2, 2, 3], [3, 2, 3], [3, 3, 3], [2, 3, 3]], [[0, 1, 2, 3]])
    got = {tuple(v) for v in voxelize_mesh(m).tolist()}
    assert got == fine_oracle(m)
    assert got == {(2, 2, 3), (3, 2, 3), (3, 3, 3), (2, 3, 3)}


def test_voxelize_tilted_quad_matches_oracle():
    m = SurfaceMesh([[0, 0, 0], [2, 0, 1], [2, 2, 1.5], [0, 2, 0.5]], [[0, 1, 2, 3]])
    got = {tuple(v) for v in voxelize_mesh(m).tolist()}
    ref = fine_oracle(m)
    # the 0.25 pitch can miss voxels whose distance is just under 0.5
    assert got <= ref and len(got) >= 0.95 * len(ref)


def test_voxelize_shared_corners_once_and_contains_lattice():
    m = SurfaceMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0]],
                    [[0, 1, 4, 3], [1, 2, 5, 4]])
    v = voxelize_mesh(m)
    assert len(v) == len(np.unique(v, axis=0)) == 6
    assert {tuple(x) for x in m.vertices.astype(int).tolist()} <= {tuple(x) for x in v.tolist()}


def test_report_formats():
    s = evaluate(plane(), plane(z=2))
    rep = MetricReport(s, None, 3.0)
    obj = json.loads(rep.to_json())
    assert obj["surface"]["F"] == 1.0 and obj["boundary"] is None and obj["epsilon"] == 3.0
    lines = rep.to_text().splitlines()
    assert lines[0].split() == ["P", "R", "F", "GT_Cov"]
    assert lines[1].split()[0] == "surface"

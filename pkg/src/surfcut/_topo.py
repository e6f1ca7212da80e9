"""Topology-preserving growth of a cell set from a seed cell.

Cells are added in ascending key order and only when the union of closed
unit cubes stays contractible (the new cube meets the current union in a
contractible part of its boundary) and no pinch pattern appears: a diagonal
pair around an edge, or an opposite-corner pair (of cells or of gaps) in a
2x2x2 block.  The grown set is then a ball whose boundary is a 2-sphere.
"""
import numpy as np
from numba import njit

from ._heap import heap_grow, heap_pop, heap_push


@njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def _is_simple(S, i, j, k):
    # covered boundary faces of the cube, in a local 3x3x3 doubled grid
    cov = np.zeros((3, 3, 3), dtype=np.bool_)
    for di in range(-1, 2):
        for dj in range(-1, 2):
            for dk in range(-1, 2):
                if (di == 0 and dj == 0 and dk == 0) or S[i + di, j + dj, k + dk] == 0:
                    continue
                # neighbour at offset d shares every face f with f_a = 1 + d_a where d_a != 0
                for a in range(3):
                    for b in range(3):
                        for c in range(3):
                            if a == 1 and b == 1 and c == 1:
                                continue
                            if di != 0 and a != 1 + di:
                                continue
                            if dj != 0 and b != 1 + dj:
                                continue
                            if dk != 0 and c != 1 + dk:
                                continue
                            cov[a, b, c] = True
    chi = 0
    n = 0
    parent = np.arange(27)
    for a in range(3):
        for b in range(3):
            for c in range(3):
                if not cov[a, b, c]:
                    continue
                n += 1
                dim = (a == 1) + (b == 1) + (c == 1)
                chi += 1 if dim % 2 == 0 else -1
                me = 9 * a + 3 * b + c
                # union with covered facets
                for ax in range(3):
                    p = (a, b, c)[ax]
                    if p != 1:
                        continue
                    for s in (-1, 1):
                        aa, bb, cc = a, b, c
                        if ax == 0:
                            aa += s
                        elif ax == 1:
                            bb += s
                        else:
                            cc += s
                        if cov[aa, bb, cc]:
                            ra = _find(parent, me)
                            rb = _find(parent, 9 * aa + 3 * bb + cc)
                            if ra != rb:
                                parent[max(ra, rb)] = min(ra, rb)
    if n == 0 or chi != 1:
        return False
    root = -1
    for a in range(3):
        for b in range(3):
            for c in range(3):
                if cov[a, b, c]:
                    r = _find(parent, 9 * a + 3 * b + c)
                    if root < 0:
                        root = r
                    elif r != root:
                        return False
    return True


@njit(cache=True)
def _pinch_free(S, i, j, k):
    """No critical pattern in any 2x2x2 block or edge ring containing cell (i, j, k)."""
    for oi in range(-1, 1):
        for oj in range(-1, 1):
            for ok in range(-1, 1):
                x, y, z = i + oi, j + oj, k + ok
                n = 0
                for a in range(2):
                    for b in range(2):
                        for c in range(2):
                            n += S[x + a, y + b, z + c]
                if n == 2 or n == 6:
                    want = 1 if n == 2 else 0
                    for a in range(2):
                        for b in range(2):
                            if S[x, y + a, z + b] == want and S[x + 1, y + 1 - a, z + 1 - b] == want:
                                return False
                # edge rings: four cells around each block edge through the block centre
                for ax in range(3):
                    for t in range(2):
                        if ax == 0:
                            p, q = S[x + t, y, z], S[x + t, y + 1, z + 1]
                            r, s = S[x + t, y + 1, z], S[x + t, y, z + 1]
                        elif ax == 1:
                            p, q = S[x, y + t, z], S[x + 1, y + t, z + 1]
                            r, s = S[x + 1, y + t, z], S[x, y + t, z + 1]
                        else:
                            p, q = S[x, y, z + t], S[x + 1, y + 1, z + t]
                            r, s = S[x + 1, y, z + t], S[x, y + 1, z + t]
                        if p == q and r == s and p != r:
                            return False
    return True


@njit(cache=True)
def _grow(target, key, seed):
    nx, ny, nz = target.shape
    S = np.zeros((nx, ny, nz), dtype=np.uint8)
    queued = np.zeros((nx, ny, nz), dtype=np.bool_)
    keys = np.empty(1024, dtype=np.float64)
    ids = np.empty(1024, dtype=np.int64)
    size = 0
    si, sj, sk = seed
    S[si, sj, sk] = 1
    for di in range(-1, 2):
        for dj in range(-1, 2):
            for dk in range(-1, 2):
                a, b, c = si + di, sj + dj, sk + dk
                if target[a, b, c] and S[a, b, c] == 0 and not queued[a, b, c]:
                    queued[a, b, c] = True
                    if size == keys.shape[0]:
                        keys, ids = heap_grow(keys, ids, size)
                    size = heap_push(keys, ids, size, key[a, b, c], (a * ny + b) * nz + c)
    while size > 0:
        _, v, size = heap_pop(keys, ids, size)
        c = v % nz
        b = (v // nz) % ny
        a = v // (ny * nz)
        queued[a, b, c] = False
        if S[a, b, c]:
            continue
        if not _is_simple(S, a, b, c):
            continue
        S[a, b, c] = 1
        if not _pinch_free(S, a, b, c):
            S[a, b, c] = 0
            continue
        # (re)queue neighbours; a rejected cell gets another chance here
        for di in range(-1, 2):
            for dj in range(-1, 2):
                for dk in range(-1, 2):
                    x, y, z = a + di, b + dj, c + dk
                    if target[x, y, z] and S[x, y, z] == 0 and not queued[x, y, z]:
                        queued[x, y, z] = True
                        if size == keys.shape[0]:
                            keys, ids = heap_grow(keys, ids, size)
                        size = heap_push(keys, ids, size, key[x, y, z], (x * ny + y) * nz + z)
    return S


def grow_ball(target: np.ndarray, key: np.ndarray, seed) -> np.ndarray:
    """Ball inside ``target`` grown from cell ``seed`` in ascending ``key`` order."""
    t = np.pad(np.asarray(target, dtype=np.bool_), 2)
    kk = np.pad(np.asarray(key, dtype=np.float64), 2, constant_values=np.inf)
    s = tuple(int(c) + 2 for c in seed)
    if not t[s]:
        raise ValueError(f"seed cell {tuple(seed)} is not in the target set")
    return _grow(t, kk, np.array(s, dtype=np.int64))[2:-2, 2:-2, 2:-2].astype(bool)


def fill_pinches(cells: np.ndarray, max_rounds: int = 64) -> np.ndarray:
    """Add cells until no 2x2 edge ring or 2x2x2 block has a pinch pattern.

    Each offending ring or block is filled completely; this only grows the set.
    """
    c = np.pad(np.asarray(cells, dtype=bool), 1)
    shp = c.shape
    for _ in range(max_rounds):
        add = np.zeros_like(c)
        for ax in range(3):
            u, v = [a for a in range(3) if a != ax]

            def blk(du, dv):
                t = [slice(None)] * 3
                t[u] = slice(du, shp[u] - 1 + du)
                t[v] = slice(dv, shp[v] - 1 + dv)
                return tuple(t)
            a, b, d, e = c[blk(0, 0)], c[blk(1, 1)], c[blk(0, 1)], c[blk(1, 0)]
            hit = (a == b) & (d == e) & (a != d)
            for du in (0, 1):
                for dv in (0, 1):
                    add[blk(du, dv)] |= hit
        corner = {d: c[d[0]:shp[0] - 1 + d[0], d[1]:shp[1] - 1 + d[1], d[2]:shp[2] - 1 + d[2]]
                  for d in np.ndindex(2, 2, 2)}
        n = sum(w.astype(np.int64) for w in corner.values())
        hit = np.zeros(n.shape, dtype=bool)
        for i, j in np.ndindex(2, 2):
            lo, hi = corner[0, i, j], corner[1, 1 - i, 1 - j]
            hit |= ((n == 2) & lo & hi) | ((n == 6) & ~lo & ~hi)
        for d in corner:
            add[d[0]:shp[0] - 1 + d[0], d[1]:shp[1] - 1 + d[1], d[2]:shp[2] - 1 + d[2]] |= hit
        add &= ~c
        add[[0, -1], :, :] = False
        add[:, [0, -1], :] = False
        add[:, :, [0, -1]] = False
        if not add.any():
            break
        c |= add
    return c[1:-1, 1:-1, 1:-1]

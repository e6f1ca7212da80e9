"""Array-backed binary heaps for numba kernels.

Entries are ``(key, id)`` pairs compared lexicographically, so equal keys
pop in ascending id order.  Deletion is lazy: callers push duplicates and
skip stale entries on pop.  For a max-heap push negated keys.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def heap_push(keys, ids, size, key, ident):
    """Push and return the new size.  The arrays must have spare capacity."""
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 1
        pk = keys[parent]
        if key < pk or (key == pk and ident < ids[parent]):
            keys[pos] = pk
            ids[pos] = ids[parent]
            pos = parent
        else:
            break
    keys[pos] = key
    ids[pos] = ident
    return size + 1


@njit(cache=True)
def heap_pop(keys, ids, size):
    """Remove the top entry; returns ``(key, id, new_size)``."""
    key = keys[0]
    ident = ids[0]
    size -= 1
    lk = keys[size]
    li = ids[size]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size:
            rk = keys[child + 1]
            ck = keys[child]
            if rk < ck or (rk == ck and ids[child + 1] < ids[child]):
                child += 1
        ck = keys[child]
        if ck < lk or (ck == lk and ids[child] < li):
            keys[pos] = ck
            ids[pos] = ids[child]
            pos = child
        else:
            break
    keys[pos] = lk
    ids[pos] = li
    return key, ident, size


@njit(cache=True)
def heap_grow(keys, ids, size):
    """Copy into arrays of twice the capacity."""
    cap = max(16, 2 * keys.shape[0])
    nk = np.empty(cap, dtype=np.float64)
    ni = np.empty(cap, dtype=np.int64)
    nk[:size] = keys[:size]
    ni[:size] = ids[:size]
    return nk, ni

"""Cubical complexes in doubled (Khalimsky) coordinates.

A face is an integer triple; an even coordinate is a lattice point ``a/2``
and an odd one is the open unit interval between its two even neighbours.
The dimension of a face is therefore the number of odd coordinates, and
voxel ``(i, j, k)`` of a volume is the 0-face ``(2i, 2j, 2k)``.
"""
from __future__ import annotations

import itertools
from typing import Iterable, Iterator

Face = tuple[int, int, int]


class ComplexError(ValueError):
    pass


def dim(f: Face) -> int:
    return (f[0] & 1) + (f[1] & 1) + (f[2] & 1)


def vertex_face(ijk) -> Face:
    """0-face of the lattice point (voxel centre) ``ijk``."""
    return (2 * int(ijk[0]), 2 * int(ijk[1]), 2 * int(ijk[2]))


def face_center(f: Face) -> tuple[float, float, float]:
    return (f[0] / 2.0, f[1] / 2.0, f[2] / 2.0)


def _axis_options(c: int) -> tuple[int, ...]:
    return (c - 1, c, c + 1) if c & 1 else (c,)


def closure(f: Face) -> list[Face]:
    """``f`` together with all of its sub-faces."""
    return list(itertools.product(*(_axis_options(c) for c in f)))


def sub_faces(f: Face) -> set[Face]:
    """All proper faces of ``f``."""
    out = set(closure(f))
    out.discard(f)
    return out


def vertices_of(f: Face) -> list[Face]:
    """The 0-sub-faces (corners) of ``f``, including ``f`` itself if it is a 0-face."""
    return list(itertools.product(*(((c - 1, c + 1) if c & 1 else (c,)) for c in f)))


def facets(f: Face) -> list[Face]:
    """Sub-faces of dimension ``dim(f) - 1``."""
    out = []
    for ax in range(3):
        if f[ax] & 1:
            for d in (-1, 1):
                g = list(f)
                g[ax] += d
                out.append(tuple(g))
    return out


def cofacets(f: Face) -> list[Face]:
    """Grid faces of dimension ``dim(f) + 1`` that have ``f`` as a facet."""
    out = []
    for ax in range(3):
        if not f[ax] & 1:
            for d in (-1, 1):
                g = list(f)
                g[ax] += d
                out.append(tuple(g))
    return out


def star(f: Face) -> list[Face]:
    """Every grid face having ``f`` as a proper face (bounds not checked)."""
    out = list(itertools.product(*(((c - 1, c, c + 1) if not c & 1 else (c,)) for c in f)))
    out.remove(f)
    return out


class CubicalComplex:
    """A finite set of faces closed under taking sub-faces.

    ``cost`` and ``label`` are optional per-face attributes; faces without an
    entry simply have none.  Iteration and all tie-breaking use lexicographic
    face order.
    """

    def __init__(self, faces: Iterable[Face] = (), cost: dict | None = None):
        self._faces: set[Face] = set()
        self.cost: dict[Face, float] = dict(cost or {})
        self.label: dict[Face, frozenset] = {}
        for f in faces:
            self.add(f)

    @classmethod
    def from_closed(cls, faces: Iterable[Face], cost: dict | None = None) -> "CubicalComplex":
        """Build from a face set the caller guarantees to be closed."""
        out = cls(cost=cost)
        out._faces = set(faces)
        return out

    def copy(self) -> "CubicalComplex":
        out = CubicalComplex.from_closed(self._faces, self.cost)
        out.label = dict(self.label)
        return out

    def add(self, f: Face) -> None:
        """Insert ``f`` and its closure."""
        f = tuple(int(c) for c in f)
        if f in self._faces:
            return
        self._faces.update(closure(f))

    def __contains__(self, f) -> bool:
        return tuple(f) in self._faces

    def __len__(self) -> int:
        return len(self._faces)

    def __iter__(self) -> Iterator[Face]:
        return iter(sorted(self._faces))

    @property
    def faces(self) -> frozenset:
        return frozenset(self._faces)

    def faces_of_dim(self, d: int) -> list[Face]:
        return sorted(f for f in self._faces if dim(f) == d)

    def counts(self) -> tuple[int, int, int, int]:
        n = [0, 0, 0, 0]
        for f in self._faces:
            n[dim(f)] += 1
        return tuple(n)

    @property
    def dimension(self) -> int:
        return max((dim(f) for f in self._faces), default=-1)

    def is_closed(self) -> bool:
        return all(g in self._faces for f in self._faces for g in sub_faces(f))

    def cofaces_in(self, g: Face) -> set[Face]:
        g = tuple(g)
        if g not in self._faces:
            raise ComplexError(f"face {g} is not in the complex")
        return {f for f in star(g) if f in self._faces}

    def free_pair(self, g: Face):
        """The unique face properly containing ``g``, or None if ``g`` is not free."""
        co = self.cofaces_in(g)
        if len(co) == 1:
            return next(iter(co))
        return None

    def collapse_inplace(self, g: Face, f: Face) -> None:
        g, f = tuple(g), tuple(f)
        if self.free_pair(g) != f:
            raise ComplexError(f"({g}, {f}) is not a free pair")
        for h in (g, f):
            self._faces.discard(h)
            self.cost.pop(h, None)
            self.label.pop(h, None)

    def collapse(self, g: Face, f: Face) -> "CubicalComplex":
        out = self.copy()
        out.collapse_inplace(g, f)
        return out

    def remove_unchecked(self, f: Face) -> None:
        self._faces.discard(f)

    def euler_characteristic(self) -> int:
        n = self.counts()
        return n[0] - n[1] + n[2] - n[3]

    def components(self) -> list[set[Face]]:
        """Connected components, each as its set of 0-faces."""
        verts = [f for f in self._faces if dim(f) == 0]
        parent = {v: v for v in verts}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for e in self._faces:
            if dim(e) == 1:
                a, b = vertices_of(e)
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[Face, set[Face]] = {}
        for v in verts:
            groups.setdefault(find(v), set()).add(v)
        return [groups[k] for k in sorted(groups)]

    def n_components(self) -> int:
        return len(self.components())


def euler_characteristic(X: CubicalComplex) -> int:
    return X.euler_characteristic()


def cofaces_in(g: Face, X: CubicalComplex) -> set[Face]:
    return X.cofaces_in(g)


def free_pair(g: Face, X: CubicalComplex):
    return X.free_pair(g)


def collapse(X: CubicalComplex, g: Face, f: Face) -> CubicalComplex:
    return X.collapse(g, f)


def solid_box(lo, hi) -> CubicalComplex:
    """Closure of all 3-faces with voxel corners in ``[lo, hi]`` (lattice units)."""
    cells = itertools.product(*(range(2 * a + 1, 2 * b, 2) for a, b in zip(lo, hi)))
    return CubicalComplex(cells)


def box_surface(lo, hi) -> CubicalComplex:
    """Boundary 2-faces of a solid box: a closed digital sphere."""
    solid = solid_box(lo, hi)
    out = CubicalComplex()
    for f in solid.faces_of_dim(2):
        if len(solid.cofaces_in(f)) == 1:
            out.add(f)
    return out


def collapse_to_fixpoint(X: CubicalComplex, pinned: Iterable[Face] = ()) -> int:
    """Repeatedly collapse lexicographically-first free pairs; returns the count."""
    pinned = set(pinned)
    n = 0
    changed = True
    while changed:
        changed = False
        for g in sorted(X.faces, key=lambda f: (-dim(f), f)):
            if g not in X or g in pinned:
                continue
            f = X.free_pair(g)
            if f is not None and f not in pinned:
                X.collapse_inplace(g, f)
                n += 1
                changed = True
    return n

"""Labelled plane trees and the pointed Cori-Vauquelin-Schaeffer bijection.

A plane tree with ``n`` edges is sampled from a uniform Dyck path of length
``2n``; its vertices carry integer labels with increments in ``{-1, 0, +1}``
along every edge and label 0 at the root.  :func:`cvs_bijection` turns such
a tree into a rooted, pointed quadrangulation with ``n`` faces, stored as a
half-edge rotation system.

Corners of the tree are indexed by their position in the contour sequence,
so corner ``c`` is the sector visited at time ``c`` of the walk around the
tree.  Every corner ``c`` contributes one map edge, made of the half-edges
``2c`` (at the corner's vertex) and ``2c + 1`` (at its successor, or at the
pointed vertex when the corner has minimal label).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "C_QUAD",
    "LabeledPlaneTree",
    "QuadMap",
    "MapFormatError",
    "sample_labeled_tree",
    "uniform_dyck_path",
    "tree_from_dyck",
    "cvs_bijection",
    "sample_quadrangulation",
    "label_distance_identity",
    "canonical_code",
    "all_dyck_paths",
    "enumerate_labeled_trees",
    "enumerate_small",
    "rooted_quadrangulation_count",
    "save_qmap",
    "load_qmap",
]

#: Distance normalisation for quadrangulations, ``(9 / (q (q - 2)))**(1/4)`` at q = 4.
C_QUAD = (9.0 / 8.0) ** 0.25

QM1_MAGIC = b"QM1\x00"
QM1_VERSION = 1


class MapFormatError(ValueError):
    """Raised for malformed trees or unreadable ``qm1`` files."""


@dataclass(frozen=True, eq=False)
class LabeledPlaneTree:
    """Rooted plane tree with integer vertex labels.

    Vertices are numbered in order of first visit, so the root is 0 and
    ``parent[v] < v`` for every other vertex.  ``contour[c]`` is the vertex
    owning corner ``c``.
    """

    n: int
    parent: np.ndarray
    labels: np.ndarray
    contour: np.ndarray
    seed: int | None = None

    @property
    def n_vertices(self) -> int:
        return self.n + 1

    @cached_property
    def corner_labels(self) -> np.ndarray:
        return self.labels[self.contour]

    @cached_property
    def corner_rank(self) -> np.ndarray:
        """Rank of each corner among the corners of its vertex (contour order)."""
        rank = np.zeros(2 * self.n, dtype=np.int64)
        seen = np.zeros(self.n + 1, dtype=np.int64)
        for c, v in enumerate(self.contour.tolist()):
            rank[c] = seen[v]
            seen[v] += 1
        return rank

    @cached_property
    def corner_counts(self) -> np.ndarray:
        return np.bincount(self.contour, minlength=self.n + 1)

    def children(self, v: int) -> list[int]:
        """Children of ``v`` in left-to-right (contour) order."""
        return [int(u) for u in np.flatnonzero(self.parent == v)]

    def validate(self) -> None:
        n = self.n
        if self.contour.shape != (2 * n,) or self.parent.shape != (n + 1,):
            raise MapFormatError("contour must have 2n entries and parent n+1")
        if self.labels[0] != 0:
            raise MapFormatError("root label must be 0")
        c = self.contour
        # consecutive contour vertices are joined by a tree edge
        nxt = np.roll(c, -1)
        ok = (self.parent[nxt] == c) | (self.parent[c] == nxt)
        if n > 0 and not ok.all():
            raise MapFormatError("contour does not walk along tree edges")
        if n > 0 and not np.array_equal(np.bincount(c, minlength=n + 1), _degrees(self.parent)):
            raise MapFormatError("contour does not visit every edge twice")
        if n > 0:
            diffs = np.abs(self.labels[1:] - self.labels[self.parent[1:]])
            if diffs.max() > 1:
                raise MapFormatError("label jump larger than 1 across a tree edge")


def _degrees(parent: np.ndarray) -> np.ndarray:
    deg = np.bincount(parent[1:], minlength=parent.size)
    deg[1:] += 1
    return deg


def uniform_dyck_path(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Dyck path of length ``2n`` as a +/-1 step array (cycle lemma)."""
    steps = np.concatenate([np.ones(n, dtype=np.int8), -np.ones(n + 1, dtype=np.int8)])
    rng.shuffle(steps)
    heights = np.cumsum(steps)
    # the unique rotation starting right after the first minimum stays > -1
    k = int(np.argmin(heights)) + 1
    rotated = np.roll(steps, -k)
    return rotated[:-1]


def tree_from_dyck(steps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(parent, contour)`` for the plane tree coded by a Dyck path."""
    n = steps.size // 2
    parent = np.full(n + 1, -1, dtype=np.int64)
    contour = np.empty(2 * n, dtype=np.int64)
    stack = [0]
    nxt = 1
    for i, s in enumerate(steps.tolist()):
        contour[i] = stack[-1]
        if s > 0:
            parent[nxt] = stack[-1]
            stack.append(nxt)
            nxt += 1
        else:
            stack.pop()
    if len(stack) != 1 or nxt != n + 1:
        raise MapFormatError("not a Dyck path")
    return parent, contour


def _labels_from_increments(parent: np.ndarray, increments: np.ndarray) -> np.ndarray:
    labels = np.zeros(parent.size, dtype=np.int64)
    # parent[v] < v, so one forward pass suffices
    inc = increments.tolist()
    par = parent.tolist()
    lab = [0] * parent.size
    for v in range(1, parent.size):
        lab[v] = lab[par[v]] + inc[v - 1]
    labels[:] = lab
    return labels


def sample_labeled_tree(n: int, seed: int | np.random.Generator | None = None) -> LabeledPlaneTree:
    """Uniform plane tree with ``n`` edges and uniform labels in ``{-1,0,1}``-steps."""
    if n < 1:
        raise ValueError(f"tree needs at least one edge, got n={n}")
    rng = np.random.default_rng(seed)
    steps = uniform_dyck_path(n, rng)
    parent, contour = tree_from_dyck(steps)
    increments = rng.integers(-1, 2, size=n)
    labels = _labels_from_increments(parent, increments)
    return LabeledPlaneTree(
        n=n,
        parent=parent,
        labels=labels,
        contour=contour,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
    )


@dataclass(frozen=True, eq=False)
class QuadMap:
    """Rooted, pointed quadrangulation stored as a rotation system.

    ``next[h]`` is the half-edge following ``h`` counter-clockwise around
    ``origin[h]``; ``twin[h] = h ^ 1``.  Faces are the orbits of
    ``next[twin[h]]``.  Vertices ``0..n`` are the tree vertices and vertex
    ``n + 1`` is the pointed vertex, whose label is ``min(labels) - 1``.
    ``successor[c]`` is the successor corner of tree corner ``c`` (``-1``
    for corners linked to the pointed vertex).
    """

    n: int
    twin: np.ndarray
    next: np.ndarray
    origin: np.ndarray
    labels: np.ndarray
    successor: np.ndarray
    contour: np.ndarray
    root: int
    pointed: int
    seed: int | None = None
    root_sign: int = 1
    scale: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", C_QUAD * self.n ** -0.25)

    @property
    def n_vertices(self) -> int:
        return self.n + 2

    @property
    def n_edges(self) -> int:
        return self.twin.size // 2

    @property
    def target(self) -> np.ndarray:
        return self.origin[self.twin]

    @cached_property
    def faces(self) -> list[list[int]]:
        """Half-edge cycles of the face permutation ``next o twin``."""
        phi = self.next[self.twin]
        seen = np.zeros(phi.size, dtype=bool)
        out = []
        for h in range(phi.size):
            if seen[h]:
                continue
            cyc = []
            g = h
            while not seen[g]:
                seen[g] = True
                cyc.append(g)
                g = int(phi[g])
            out.append(cyc)
        return out

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(indptr, indices)`` of the simple graph underlying the map."""
        V = self.n_vertices
        src = np.concatenate([self.origin[0::2], self.origin[1::2]])
        dst = np.concatenate([self.origin[1::2], self.origin[0::2]])
        key = np.unique(src * V + dst)
        src, dst = key // V, key % V
        indptr = np.zeros(V + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst.astype(np.int64)

    def neighbours(self, v: int) -> np.ndarray:
        indptr, indices = self.adjacency
        return indices[indptr[v]:indptr[v + 1]]

    @cached_property
    def vertex_corners(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n + 1)]
        for c, v in enumerate(self.contour.tolist()):
            out[v].append(c)
        return out

    def check_invariants(self) -> None:
        """Raise ``AssertionError`` unless Euler, face-degree, bipartite and connectivity hold."""
        V, E = self.n_vertices, self.n_edges
        faces = self.faces
        F = len(faces)
        assert E == 2 * self.n, f"expected {2 * self.n} edges, got {E}"
        assert F == self.n, f"expected {self.n} faces, got {F}"
        assert V - E + F == 2, "Euler relation fails"
        assert all(len(f) == 4 for f in faces), "face of degree != 4"
        assert np.array_equal(self.twin[self.twin], np.arange(2 * E))
        assert np.array_equal(self.origin[self.next], self.origin), "rotation leaves its vertex"
        from .geodesics import bfs_distances

        dist = bfs_distances(self, self.pointed)
        assert (dist >= 0).all(), "map is disconnected"
        o, t = self.origin[0::2], self.origin[1::2]
        assert ((dist[o] - dist[t]) % 2 == 1).all(), "map is not bipartite"


def _successors(corner_labels: np.ndarray) -> np.ndarray:
    """Next corner (cyclically) with label one less, or -1 at the minimum."""
    m = corner_labels.size
    lab = corner_labels.tolist()
    lo = min(lab)
    last = [-1] * (max(lab) - lo + 2)
    succ = [-1] * m
    for i in range(2 * m - 1, -1, -1):
        c = i % m
        l = lab[c] - lo
        if i < m and l > 0:
            succ[c] = last[l - 1]
        last[l] = c
    return np.asarray(succ, dtype=np.int64)


def cvs_bijection(tree: LabeledPlaneTree, root_sign: int = 1) -> QuadMap:
    """Pointed CVS bijection: labelled tree -> rooted pointed quadrangulation.

    The root edge is the one drawn from corner 0 (the root corner before
    the first child); ``root_sign = +1`` orients it away from the tree root.
    """
    n = tree.n
    m = 2 * n
    if tree.contour.shape != (m,):
        raise MapFormatError("contour must have exactly 2n corners")
    if root_sign not in (1, -1):
        raise ValueError("root_sign must be +1 or -1")
    clab = tree.labels[tree.contour]
    if n > 1 and np.abs(np.diff(np.append(clab, clab[0]))).max() > 1:
        raise MapFormatError("labels jump by more than 1 along the contour")
    succ = _successors(clab)
    pointed = n + 1

    corners = np.arange(m, dtype=np.int64)
    H = 2 * m
    origin = np.empty(H, dtype=np.int64)
    origin[0::2] = tree.contour
    at_min = succ < 0
    origin[1::2] = np.where(at_min, pointed, tree.contour[np.maximum(succ, 0)])

    # rotation order: vertex, then corner in contour order, then within a
    # corner the incoming arcs by decreasing contour offset, outgoing last
    key_corner = np.empty(H, dtype=np.int64)
    key_inner = np.empty(H, dtype=np.int64)
    key_corner[0::2] = corners
    key_inner[0::2] = 0
    key_corner[1::2] = np.where(at_min, -corners, succ)
    key_inner[1::2] = np.where(at_min, 0, -((corners - succ) % m))
    order = np.lexsort((key_inner, key_corner, origin))
    nxt = np.empty(H, dtype=np.int64)
    grp = origin[order]
    starts = np.flatnonzero(np.r_[True, grp[1:] != grp[:-1]])
    ends = np.r_[starts[1:], H]
    shifted = np.roll(order, -1)
    shifted[ends - 1] = order[starts]
    nxt[order] = shifted

    labels = np.append(tree.labels, tree.labels.min() - 1)
    return QuadMap(
        n=n,
        twin=np.arange(H, dtype=np.int64) ^ 1,
        next=nxt,
        origin=origin,
        labels=labels,
        successor=succ,
        contour=tree.contour.copy(),
        root=0 if root_sign == 1 else 1,
        pointed=pointed,
        seed=tree.seed,
        root_sign=root_sign,
    )


def sample_quadrangulation(n: int, seed: int | None = None) -> tuple[LabeledPlaneTree, QuadMap]:
    """Sample a labelled tree and its quadrangulation; the root sign is drawn from the same stream."""
    rng = np.random.default_rng(seed)
    tree = sample_labeled_tree(n, rng)
    tree = LabeledPlaneTree(n, tree.parent, tree.labels, tree.contour, seed)
    sign = 1 if rng.integers(0, 2) else -1
    return tree, cvs_bijection(tree, sign)


def label_distance_identity(q: QuadMap, tree: LabeledPlaneTree) -> int:
    """Max over vertices of ``|d(v, pointed) - (label(v) - min + 1)|``; zero when the map is right."""
    if q.n != tree.n or not np.array_equal(q.contour, tree.contour):
        raise ValueError("map was not built from this tree")
    from .geodesics import bfs_distances

    dist = bfs_distances(q, q.pointed)
    expected = tree.labels - tree.labels.min() + 1
    return int(np.abs(dist[: tree.n + 1] - expected).max())


def canonical_code(q: QuadMap) -> tuple[tuple[int, ...], tuple[int, ...], int]:
    """Relabel half-edges in discovery order from the root.

    Rooted maps have no non-trivial root-preserving automorphism, so the
    returned ``(next, twin, pointed)`` triple is a complete invariant of the
    rooted pointed map.
    """
    H = q.twin.size
    new = {q.root: 0}
    queue = [q.root]
    i = 0
    while i < len(queue):
        h = queue[i]
        i += 1
        for g in (int(q.next[h]), int(q.twin[h])):
            if g not in new:
                new[g] = len(new)
                queue.append(g)
    if len(new) != H:
        raise MapFormatError("map is not connected")
    inv = sorted(new, key=new.get)
    nxt = tuple(new[int(q.next[h])] for h in inv)
    tw = tuple(new[int(q.twin[h])] for h in inv)
    pointed = min(new[h] for h in np.flatnonzero(q.origin == q.pointed).tolist())
    return nxt, tw, pointed


_HEADER = struct.Struct("<4sBbxxqqqqd")


def save_qmap(q: QuadMap, path: str | Path) -> None:
    """Write ``q`` as a little-endian ``qm1`` file.

    Layout: header (magic, version, root sign, n, seed or -1, root half-edge,
    pointed vertex, scale) followed by the int64 arrays ``next``, ``origin``,
    ``labels``, ``successor`` and ``contour``.  ``twin`` is implicit.
    """
    seed = -1 if q.seed is None else int(q.seed)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(QM1_MAGIC, QM1_VERSION, q.root_sign, q.n, seed, q.root, q.pointed, q.scale))
        for arr in (q.next, q.origin, q.labels, q.successor, q.contour):
            fh.write(np.ascontiguousarray(arr, dtype="<i8").tobytes())


def read_qm1_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise MapFormatError(f"{path}: truncated header")
    magic, version, sign, n, seed, root, pointed, scale = _HEADER.unpack(raw)
    if magic != QM1_MAGIC:
        raise MapFormatError(f"{path}: not a qm1 file")
    if version != QM1_VERSION:
        raise MapFormatError(f"{path}: unsupported qm1 version {version}")
    return dict(version=version, root_sign=sign, n=n, seed=None if seed < 0 else seed,
                root=root, pointed=pointed, scale=scale)


def load_qmap(path: str | Path, mmap: bool = False) -> QuadMap:
    hdr = read_qm1_header(path)
    n = hdr["n"]
    sizes = [4 * n, 4 * n, n + 2, 2 * n, 2 * n]
    total = sum(sizes)
    if mmap:
        data = np.memmap(path, dtype="<i8", mode="r", offset=_HEADER.size)
    else:
        with open(path, "rb") as fh:
            fh.seek(_HEADER.size)
            data = np.frombuffer(fh.read(), dtype="<i8")
    if data.size != total:
        raise MapFormatError(f"{path}: expected {total} array entries, found {data.size}")
    parts = np.split(np.asarray(data, dtype=np.int64), np.cumsum(sizes)[:-1])
    nxt, origin, labels, succ, contour = parts
    return QuadMap(
        n=n,
        twin=np.arange(4 * n, dtype=np.int64) ^ 1,
        next=nxt,
        origin=origin,
        labels=labels,
        successor=succ,
        contour=contour,
        root=hdr["root"],
        pointed=hdr["pointed"],
        seed=hdr["seed"],
        root_sign=hdr["root_sign"],
    )


def all_dyck_paths(n: int):
    """Every Dyck path of length ``2n`` as a +/-1 array, in lexicographic order (down first)."""

    def rec(prefix: list[int], h: int, ups: int):
        if len(prefix) == 2 * n:
            yield np.array(prefix, dtype=np.int8)
            return
        if h > 0:
            yield from rec(prefix + [-1], h - 1, ups)
        if ups < n:
            yield from rec(prefix + [1], h + 1, ups + 1)

    yield from rec([], 0, 0)


def enumerate_labeled_trees(n: int):
    """All ``Cat(n) * 3**n`` labelled plane trees with ``n`` edges."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for steps in all_dyck_paths(n):
        parent, contour = tree_from_dyck(steps)
        for inc in np.ndindex(*(3,) * n):
            labels = _labels_from_increments(parent, np.asarray(inc) - 1)
            yield LabeledPlaneTree(n, parent, labels, contour)


def rooted_quadrangulation_count(n: int) -> int:
    """``2 * 3**n * (2n)! / (n! (n+2)!)``."""
    from math import factorial

    return 2 * 3 ** n * factorial(2 * n) // (factorial(n) * factorial(n + 2))


def enumerate_small(n: int) -> dict:
    """Push every labelled tree with ``n`` edges through the bijection (both root signs).

    Returns shape and tree counts, the number of distinct rooted pointed
    maps, the number of distinct rooted maps once the point is forgotten,
    and whether every output passed the structural invariants.
    """
    shapes = sum(1 for _ in all_dyck_paths(n))
    trees = 0
    pointed: set = set()
    rooted: set = set()
    ok = True
    for tree in enumerate_labeled_trees(n):
        trees += 1
        for sign in (1, -1):
            q = cvs_bijection(tree, sign)
            try:
                q.check_invariants()
            except AssertionError:
                ok = False
            code = canonical_code(q)
            pointed.add(code)
            rooted.add(code[:2])
    return {
        "n": n,
        "shapes": shapes,
        "labelings_per_shape": 3 ** n,
        "trees": trees,
        "inputs": 2 * trees,
        "distinct_pointed": len(pointed),
        "distinct_rooted": len(rooted),
        "expected_rooted": rooted_quadrangulation_count(n),
        "invariants_ok": ok,
    }

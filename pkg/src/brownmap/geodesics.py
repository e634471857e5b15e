"""Exact graph-metric engine on quadrangulations.

Distances come from a frontier-vectorised BFS over the CSR adjacency of the
simple graph underlying a :class:`~brownmap.maps.QuadMap`.  Geodesics are
vertex paths; multiple edges between the same two vertices do not multiply
geodesic counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .maps import LabeledPlaneTree, QuadMap

__all__ = [
    "GeodesicDAG",
    "SimpleGeodesic",
    "EnumerationOverflow",
    "bfs_distances",
    "bfs_dag",
    "enumerate_geodesics",
    "simple_geodesic",
    "coalescence_point",
    "geodesic_layers",
]

_INT_SAFE = float(2**62)


class EnumerationOverflow(Exception):
    """More geodesics exist than the caller's cap allows.

    ``paths`` holds the first ``cap`` geodesics in lexicographic order and
    ``count`` the exact total.
    """

    def __init__(self, count: int, cap: int, paths: list[tuple[int, ...]]):
        super().__init__(f"{count} geodesics exceed cap {cap}")
        self.count = count
        self.cap = cap
        self.paths = paths


def _csr(graph) -> tuple[np.ndarray, np.ndarray]:
    adj = getattr(graph, "adjacency", None)
    return graph if adj is None else adj


def _expand(indptr: np.ndarray, indices: np.ndarray, frontier: np.ndarray):
    """All (source, neighbour) pairs leaving ``frontier``."""
    starts = indptr[frontier]
    lens = indptr[frontier + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    nbr = indices[offsets + np.arange(total)]
    src = np.repeat(frontier, lens)
    return src, nbr


def bfs_distances(graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; ``-1`` marks unreachable vertices."""
    indptr, indices = _csr(graph)
    dist = np.full(indptr.size - 1, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size:
        _, nbr = _expand(indptr, indices, frontier)
        nbr = np.unique(nbr[dist[nbr] < 0])
        d += 1
        dist[nbr] = d
        frontier = nbr
    return dist


@dataclass(frozen=True, eq=False)
class GeodesicDAG:
    """BFS layering from ``source`` with exact geodesic counts.

    ``path_counts`` is int64 when every count fits, otherwise an object
    array of Python ints.
    """

    source: int
    dist: np.ndarray
    path_counts: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    def preds(self, u: int) -> np.ndarray:
        """Neighbours of ``u`` one step closer to the source, ascending."""
        nb = self.indices[self.indptr[u]:self.indptr[u + 1]]
        return nb[self.dist[nb] == self.dist[u] - 1]

    def count(self, u: int) -> int:
        return int(self.path_counts[u])

    @cached_property
    def layers(self) -> list[np.ndarray]:
        order = np.argsort(self.dist, kind="stable")
        d = self.dist[order]
        order, d = order[d >= 0], d[d >= 0]
        cuts = np.flatnonzero(np.diff(d)) + 1
        return np.split(order, cuts)


def bfs_dag(graph, source: int, max_depth: int | None = None) -> GeodesicDAG:
    """Distances and geodesic counts from ``source``.

    With ``max_depth`` the search stops at that distance; farther vertices
    keep ``dist == -1``.
    """
    indptr, indices = _csr(graph)
    V = indptr.size - 1
    if not 0 <= source < V:
        raise IndexError(f"source {source} out of range")
    dist = np.full(V, -1, dtype=np.int64)
    dist[source] = 0
    counts = np.zeros(V, dtype=np.int64)
    counts[source] = 1
    fcounts = np.zeros(V, dtype=np.float64)
    fcounts[source] = 1.0
    exact_pairs = []
    overflow = False
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size and (max_depth is None or d < max_depth):
        src, nbr = _expand(indptr, indices, frontier)
        fresh = (dist[nbr] < 0) | (dist[nbr] == d + 1)
        src, nbr = src[fresh], nbr[fresh]
        d += 1
        dist[nbr] = d
        layer, inv = np.unique(nbr, return_inverse=True)
        fcounts[layer] = np.bincount(inv, weights=fcounts[src], minlength=layer.size)
        if not overflow and fcounts[layer].max(initial=0.0) < _INT_SAFE:
            np.add.at(counts, nbr, counts[src])
        else:
            overflow = True
        exact_pairs.append((src, nbr))
        frontier = layer
    if overflow:
        big = np.zeros(V, dtype=object)
        big[source] = 1
        for src, nbr in exact_pairs:
            for s, t in zip(src.tolist(), nbr.tolist()):
                big[t] += big[s]
        counts = big
    return GeodesicDAG(source, dist, counts, indptr, indices)


def enumerate_geodesics(dag: GeodesicDAG, target: int, cap: int = 64) -> list[tuple[int, ...]]:
    """All geodesics from ``target`` to the DAG source, lexicographically.

    Paths are vertex tuples starting at ``target``; ``target == source``
    gives the zero-length path ``(source,)``.  Raises
    :class:`EnumerationOverflow` when more than ``cap`` geodesics exist.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if dag.dist[target] < 0:
        return []
    total = int(dag.path_counts[target])
    limit = min(cap, total)
    out: list[tuple[int, ...]] = []
    path = [target]

    def walk(u: int) -> None:
        if len(out) >= limit:
            return
        if u == dag.source:
            out.append(tuple(path))
            return
        for w in dag.preds(u).tolist():
            path.append(w)
            walk(w)
            path.pop()
            if len(out) >= limit:
                return

    walk(target)
    if total > cap:
        raise EnumerationOverflow(total, cap, out)
    return out


def geodesic_layers(dist_x: np.ndarray, dist_y: np.ndarray, y: int) -> list[np.ndarray]:
    """Vertices lying on some x-y geodesic, grouped by distance from x."""
    D = int(dist_x[y])
    on = np.flatnonzero((dist_x >= 0) & (dist_x + dist_y == D))
    d = dist_x[on]
    order = np.argsort(d, kind="stable")
    on, d = on[order], d[order]
    return np.split(on, np.flatnonzero(np.diff(d)) + 1)


@dataclass(frozen=True)
class SimpleGeodesic:
    """Successor chain from a tree corner down to the pointed vertex."""

    corner: int
    vertices: tuple[int, ...]
    corners: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.vertices) - 1


def simple_geodesic(q: QuadMap, tree: LabeledPlaneTree, corner: int) -> SimpleGeodesic:
    if not 0 <= corner < 2 * tree.n:
        raise IndexError(f"corner {corner} out of range")
    succ = q.successor
    cs = [corner]
    c = corner
    while succ[c] >= 0:
        c = int(succ[c])
        cs.append(c)
    verts = [int(tree.contour[c]) for c in cs] + [q.pointed]
    return SimpleGeodesic(corner, tuple(verts), tuple(cs))


def coalescence_point(g1, g2, from_end: bool = True) -> tuple[int, int, int]:
    """Where two geodesics with a shared endpoint merge.

    With ``from_end`` the paths share their last vertex; otherwise their
    first.  Scanning from the far (unshared) ends, return the first vertex
    common to both paths and its offsets in ``g1`` and ``g2`` counted from
    the far ends.
    """
    a = list(g1) if from_end else list(reversed(g1))
    b = list(g2) if from_end else list(reversed(g2))
    if not a or not b or a[-1] != b[-1]:
        raise ValueError("paths do not share the given endpoint")
    pos_b = {}
    for i, v in enumerate(b):
        pos_b.setdefault(v, i)
    for i, v in enumerate(a):
        if v in pos_b:
            return v, i, pos_b[v]
    raise AssertionError("unreachable: shared endpoint not found")

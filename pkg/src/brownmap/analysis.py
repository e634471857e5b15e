"""Desk-scale statistics for geodesic structure on sampled quadrangulations.

Every routine works on vertex paths of a single :class:`~brownmap.maps.QuadMap`
and takes explicit seeds.  "Near an endpoint" is discretised at
``delta = round(beta * n**(1/4))`` steps, the intrinsic metric scale of the
map.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .geodesics import (
    EnumerationOverflow,
    GeodesicDAG,
    _expand,
    bfs_dag,
    bfs_distances,
    enumerate_geodesics,
)
from .maps import LabeledPlaneTree, QuadMap

__all__ = [
    "SmallMapError",
    "InsufficientData",
    "MapSession",
    "NetworkReport",
    "ScalingFit",
    "ConfluenceResult",
    "StarCensus",
    "delta_steps",
    "wilson_interval",
    "confluence_stat",
    "classify_network",
    "network_search",
    "radius_counts",
    "network_pair_scaling",
    "cut_locus",
    "is_star_centre",
    "star_census",
    "dimension_fit",
    "ball_profile",
    "strong_convergence_probe",
]

DEFAULT_BETA = 0.1
DEFAULT_CAP = 64


class SmallMapError(ValueError):
    """The map is too small for the requested statistic."""


class InsufficientData(ValueError):
    """Too few instances or radii to produce a fit."""


def delta_steps(n: int, beta: float = DEFAULT_BETA) -> int:
    return max(1, int(round(beta * n ** 0.25)))


def wilson_interval(hits: int, total: int, z: float = 1.96) -> tuple[float, float]:
    if total == 0:
        return 0.0, 1.0
    p = hits / total
    den = 1 + z * z / total
    mid = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


class MapSession:
    """Read-only analysis context: caches BFS DAGs and the diameter estimate."""

    def __init__(self, q: QuadMap, tree: LabeledPlaneTree | None = None, cache_size: int = 16):
        self.q = q
        self.tree = tree
        self.cache_size = cache_size
        self._dags: OrderedDict[int, GeodesicDAG] = OrderedDict()
        self._pointed = bfs_dag(q, q.pointed)
        self._diameter: int | None = None

    @property
    def pointed_dag(self) -> GeodesicDAG:
        return self._pointed

    def dag(self, source: int) -> GeodesicDAG:
        if source == self.q.pointed:
            return self._pointed
        hit = self._dags.get(source)
        if hit is not None:
            self._dags.move_to_end(source)
            return hit
        dag = bfs_dag(self.q, source)
        self._dags[source] = dag
        if len(self._dags) > self.cache_size:
            self._dags.popitem(last=False)
        return dag

    @property
    def diameter(self) -> int:
        """Double-sweep lower bound on the graph diameter."""
        if self._diameter is None:
            far = int(np.argmax(self._pointed.dist))
            self._diameter = int(bfs_distances(self.q, far).max())
        return self._diameter

    def delta(self, beta: float = DEFAULT_BETA) -> int:
        return delta_steps(self.q.n, beta)


def _session(q: QuadMap, session: MapSession | None) -> MapSession:
    if session is None:
        return MapSession(q)
    if session.q is not q:
        raise ValueError("session belongs to a different map")
    return session


def _geodesic_layers(dag: GeodesicDAG, y: int) -> list[np.ndarray]:
    """Vertices on geodesics from ``y`` to the DAG source, by distance from the source."""
    D = int(dag.dist[y])
    out = [np.array([y], dtype=np.int64)]
    frontier = out[0]
    for d in range(D - 1, -1, -1):
        _, nb = _expand(dag.indptr, dag.indices, frontier)
        frontier = np.unique(nb[dag.dist[nb] == d])
        out.append(frontier)
    return out[::-1]


# --------------------------------------------------------------------------
# confluence


@dataclass
class ConfluenceResult:
    proportion: float
    ci: tuple[float, float]
    samples: int
    hits: int
    eta_over_diam: list[float]
    diameter: int
    eps: float

    @property
    def eta_summary(self) -> dict:
        e = np.asarray(self.eta_over_diam)
        if e.size == 0:
            return {"mean": float("nan"), "median": float("nan"), "q90": float("nan")}
        return {"mean": float(e.mean()), "median": float(np.median(e)), "q90": float(np.quantile(e, 0.9))}


def confluence_radius(dag: GeodesicDAG, y: int, y2: int) -> int:
    """Largest ``k >= 1`` such that every geodesic from the source to ``y`` and
    to ``y2`` passes through one common vertex at distance ``k``; 0 if none."""
    a, b = _geodesic_layers(dag, y), _geodesic_layers(dag, y2)
    best = 0
    for k in range(1, min(len(a), len(b)) - 1):
        if a[k].size == 1 and b[k].size == 1 and a[k][0] == b[k][0]:
            best = k
    return best


def confluence_stat(q: QuadMap, session: MapSession | None = None, eps: float = 0.3,
                    samples: int = 1000, seed: int = 0) -> ConfluenceResult:
    """Fraction of triples ``(x, y, y')`` whose geodesic bundles from ``x`` share a vertex beyond ``x``.

    ``x`` is a uniform vertex (fresh for every triple) and ``y, y'`` are
    uniform among vertices at distance ``>= eps * diam`` from ``x``.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    s = _session(q, session)
    diam = s.diameter
    if diam < 4:
        raise SmallMapError(f"diameter {diam} < 4")
    rng = np.random.default_rng(seed)
    hits = 0
    etas: list[float] = []
    done = 0
    while done < samples:
        x = int(rng.integers(q.n_vertices))
        dag = bfs_dag(q, x)
        far = np.flatnonzero(dag.dist >= eps * diam)
        if far.size == 0:
            continue
        y, y2 = (int(v) for v in rng.choice(far, 2))
        eta = confluence_radius(dag, y, y2)
        done += 1
        if eta > 0:
            hits += 1
            etas.append(eta / diam)
    return ConfluenceResult(hits / samples, wilson_interval(hits, samples), samples, hits, etas, diam, eps)


# --------------------------------------------------------------------------
# networks


@dataclass
class NetworkReport:
    x: int
    y: int
    distance: int
    geodesic_count: int
    delta: int
    enumerated: bool = True
    z: int | None = None
    z_offset: int | None = None
    j: int | None = None
    k: int | None = None
    regular_x: bool = False
    regular_y: bool = False
    normal: bool = False
    paths: list[tuple[int, ...]] = field(default_factory=list, repr=False)
    anchor: int | None = None
    reach: int | None = None

    @property
    def pattern(self) -> tuple[int, int] | None:
        return (self.j, self.k) if self.normal else None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.pop("paths")
        return rec


def _branches_regular(branches: list[tuple[int, ...]], delta: int) -> bool:
    """Paths from a common vertex ``z`` (index 0) to a common endpoint (last index).

    Every pair must coincide from ``z`` down to some vertex and be disjoint
    afterwards, the disjoint stretch covering at least ``min(delta, len - 2)``
    interior positions next to the endpoint.
    """
    if len(branches) < 2:
        return True
    L = len(branches[0]) - 1
    need = min(delta, L - 1)
    for a, b in itertools.combinations(branches, 2):
        agree = [a[i] == b[i] for i in range(L)]
        split = agree.index(False) if False in agree else L
        if split == 0 or any(agree[split:]):
            return False
        if L - split < need:
            return False
    return True


def classify_network(q: QuadMap, x: int, y: int, delta_beta: float = DEFAULT_BETA,
                     session: MapSession | None = None, cap: int = DEFAULT_CAP,
                     dag: GeodesicDAG | None = None) -> NetworkReport:
    """Normal ``(j, k)`` classification of the geodesic network between ``x`` and ``y``.

    ``z`` ranges over vertices shared by every geodesic, from the middle
    outwards; the first one whose ``j`` branches to ``x`` and ``k`` branches
    to ``y`` are both regular at scale ``delta`` makes the pair normal.
    When more than ``cap`` geodesics exist the report has
    ``enumerated=False`` and no classification.  ``dag`` may supply a BFS
    DAG from ``y`` reaching at least ``x``.
    """
    if x == y:
        raise ValueError("x and y must differ")
    s = _session(q, session)
    delta = s.delta(delta_beta)
    if dag is None or dag.source != y or dag.dist[x] < 0:
        dag = s.dag(y)
    D = int(dag.dist[x])
    count = int(dag.path_counts[x])
    rep = NetworkReport(x, y, D, count, delta)
    try:
        paths = enumerate_geodesics(dag, x, cap)
    except EnumerationOverflow:
        rep.enumerated = False
        return rep
    rep.paths = paths
    common = [p for p in range(1, D) if len({g[p] for g in paths}) == 1]
    common.sort(key=lambda p: (abs(2 * p - D), p))
    for p in common:
        to_x = sorted({tuple(reversed(g[:p + 1])) for g in paths})
        to_y = sorted({g[p:] for g in paths})
        rx = _branches_regular(to_x, delta)
        ry = _branches_regular(to_y, delta)
        if rep.z is None or (rx and ry):
            rep.z, rep.z_offset = int(paths[0][p]), p
            rep.j, rep.k = len(to_x), len(to_y)
            rep.regular_x, rep.regular_y = rx, ry
            rep.normal = rx and ry
        if rep.normal:
            break
    if not common:
        rep.j = rep.k = None
    return rep


def _strand_multiplicity(dag: GeodesicDAG, u: int, delta: int, max_count: int) -> int | None:
    """Number of regular branches from ``u`` to the DAG source, or ``None``."""
    c = int(dag.path_counts[u])
    if c > max_count or dag.dist[u] < 2:
        return None
    paths = enumerate_geodesics(dag, u, max_count)
    branches = [tuple(reversed(p)) for p in paths]
    return c if _branches_regular(branches, delta) else None


def network_search(q: QuadMap, anchors: int = 20, radius: int | None = None,
                   delta_beta: float = DEFAULT_BETA, seed: int = 0,
                   session: MapSession | None = None, per_bucket: int = 60,
                   max_mult: int = 3, patterns=None) -> dict[tuple[int, int], list[NetworkReport]]:
    """Targeted search for normal ``(j, k)``-networks around uniform anchors.

    Around an anchor ``a``, vertices within ``radius`` whose geodesics to
    ``a`` form exactly ``j`` regular branches are bucketed by ``j`` (nearest
    first, at most ``per_bucket`` each).  Pairs ``(x, y)`` from buckets
    ``j`` and ``k`` are kept when every ``x``-``y`` geodesic runs through
    ``a`` and the pair classifies as a normal network.  Each report gets a
    ``reach`` attribute, ``max(d(a, x), d(a, y))``, so one search at the
    largest radius yields nested counts for every smaller one.
    ``patterns`` restricts the pairs examined (default: all ``(j, k)``).
    """
    s = _session(q, session)
    delta = s.delta(delta_beta)
    if radius is None:
        radius = max(4, int(round(q.n ** 0.25 / 2)))
    rng = np.random.default_rng(seed)
    found: dict[tuple[int, int], list[NetworkReport]] = {
        (j, k): [] for j in range(1, max_mult + 1) for k in range(1, max_mult + 1)}
    wanted = set(found) if patterns is None else {tuple(p) for p in patterns}
    mults = {m for jk in wanted for m in jk}
    seen: set[tuple[int, int]] = set()
    for _ in range(anchors):
        a = int(rng.integers(q.n_vertices))
        dag_a = bfs_dag(q, a, max_depth=radius)
        near = np.flatnonzero((dag_a.dist >= 2)
                              & (dag_a.path_counts.astype(float) <= max_mult))
        near = near[np.lexsort((rng.random(near.size), dag_a.dist[near]))]
        buckets: dict[int, list[int]] = {m: [] for m in range(1, max_mult + 1)}
        for u in near.tolist():
            m = _strand_multiplicity(dag_a, u, delta, max_mult)
            if m in mults and len(buckets[m]) < per_bucket:
                buckets[m].append(u)
        mult = {u: m for m, us in buckets.items() for u in us}
        xs = sorted(mult)
        if not any(buckets[j] and buckets[k] and (j != k or len(buckets[j]) > 1) for j, k in wanted):
            continue
        for xv in xs:
            dag_x = bfs_dag(q, xv, max_depth=2 * radius)
            for yv in xs:
                if yv == xv or (xv, yv) in seen:
                    continue
                j, k = mult[xv], mult[yv]
                if (j, k) not in wanted:
                    continue
                if dag_x.dist[yv] != dag_a.dist[xv] + dag_a.dist[yv]:
                    continue
                if int(dag_x.path_counts[yv]) != j * k:
                    continue
                seen.add((xv, yv))
                dag_y = bfs_dag(q, yv, max_depth=int(dag_x.dist[yv]))
                rep = classify_network(q, xv, yv, delta_beta, s, dag=dag_y)
                if rep.normal and (rep.j, rep.k) in found:
                    rep.anchor = a
                    rep.reach = int(max(dag_a.dist[xv], dag_a.dist[yv]))
                    found[(rep.j, rep.k)].append(rep)
    return found


def radius_counts(found: dict[tuple[int, int], list[NetworkReport]], radii) -> dict[tuple[int, int], list[int]]:
    """Nested instance counts ``#{reports with reach <= r}`` per pattern."""
    return {jk: [sum(rep.reach <= r for rep in reps) for r in radii] for jk, reps in found.items()}


# --------------------------------------------------------------------------
# cut loci and stars


def _single_layer_vertex(dag: GeodesicDAG, depth: int) -> np.ndarray:
    """``f[v]`` = the unique vertex of the geodesic cone of ``v`` at ``depth`` steps, else -1."""
    V = dag.dist.size
    indptr, indices, dist = dag.indptr, dag.indices, dag.dist
    src = np.repeat(np.arange(V), np.diff(indptr))
    keep = (dist[src] > 0) & (dist[indices] == dist[src] - 1)
    ps, pw = src[keep], indices[keep]
    f = np.arange(V)
    out = []
    starts = np.searchsorted(ps, np.arange(V))
    has = np.diff(np.r_[starts, ps.size]) > 0
    first = starts[has]
    for _ in range(depth):
        vals = f[pw]
        lo = np.full(V, -1)
        hi = np.full(V, -1)
        lo[has] = np.minimum.reduceat(vals, first)
        hi[has] = np.maximum.reduceat(vals, first)
        f = np.where((lo == hi) & (lo >= 0), lo, -1)
        out.append(f)
    return out


def cut_locus(q: QuadMap, x: int, mode: str = "weak", delta_beta: float = DEFAULT_BETA,
              session: MapSession | None = None) -> np.ndarray:
    """Vertices with several geodesics to ``x``.

    ``weak``: at least two geodesics.  ``strong``: two geodesics that are
    vertex-disjoint, apart from the vertex itself, along their first
    ``min(delta, d - 1)`` steps.  By Menger's theorem on the layered cone
    this holds exactly when none of those cone layers is a single vertex.
    """
    if mode not in ("weak", "strong"):
        raise ValueError("mode must be 'weak' or 'strong'")
    s = _session(q, session)
    dag = s.dag(x)
    counts = dag.path_counts
    weak = np.asarray(counts >= 2, dtype=bool)
    if mode == "weak":
        return np.flatnonzero(weak)
    delta = s.delta(delta_beta)
    wide = np.ones(dag.dist.size, dtype=bool)
    for k, f in enumerate(_single_layer_vertex(dag, delta), start=1):
        active = dag.dist - 1 >= k
        wide &= ~active | (f < 0)
    return np.flatnonzero(wide & weak)


def is_star_centre(q: QuadMap, v: int, length: int) -> bool:
    """Two geodesics of ``length`` steps from ``v``, disjoint away from ``v``?"""
    indptr, indices = q.adjacency
    dist = {v: 0}
    layers = [np.array([v], dtype=np.int64)]
    seen = np.zeros(q.n_vertices, dtype=bool)
    seen[v] = True
    for d in range(1, length + 1):
        _, nb = _expand(indptr, indices, layers[-1])
        nb = np.unique(nb[~seen[nb]])
        if nb.size < 2:
            return False
        seen[nb] = True
        layers.append(nb)
    # keep only vertices that still reach the last layer
    alive = layers[-1]
    if alive.size < 2:
        return False
    for d in range(length - 1, 0, -1):
        _, nb = _expand(indptr, indices, alive)
        alive = np.intersect1d(layers[d], nb, assume_unique=False)
        if alive.size < 2:
            return False
    return True


@dataclass
class StarCensus:
    eps: float
    length: int
    centres: np.ndarray
    checked: int
    balls: int
    empty_balls: int

    @property
    def centre_fraction(self) -> float:
        return self.centres.size / self.checked if self.checked else float("nan")

    @property
    def emptiness(self) -> float:
        return self.empty_balls / self.balls if self.balls else float("nan")


def star_census(q: QuadMap, eps_fraction: float = 0.1, vertices=None, balls: int = 20,
                seed: int = 0, session: MapSession | None = None) -> StarCensus:
    """Centres of geodesic stars with two rays of length ``eps * diam``.

    ``vertices`` (default: all) are tested individually; in addition
    ``balls`` uniform balls of radius ``eps * diam / 2`` are scanned and the
    fraction containing no centre is reported.
    """
    if not 0 < eps_fraction < 0.5:
        raise ValueError("eps_fraction must lie in (0, 1/2)")
    s = _session(q, session)
    L = max(1, int(math.ceil(eps_fraction * s.diameter)))
    verts = np.arange(q.n_vertices) if vertices is None else np.asarray(vertices, dtype=np.int64)
    known: dict[int, bool] = {}

    def centre(v: int) -> bool:
        if v not in known:
            known[v] = is_star_centre(q, v, L)
        return known[v]

    centres = np.array([v for v in verts.tolist() if centre(v)], dtype=np.int64)
    rng = np.random.default_rng(seed)
    R = L / 2
    empty = 0
    for _ in range(balls):
        c = int(rng.integers(q.n_vertices))
        d = bfs_distances(q, c)
        inside = np.flatnonzero((d >= 0) & (d < R))
        if not any(centre(v) for v in inside.tolist()):
            empty += 1
    return StarCensus(eps_fraction, L, centres, int(verts.size), balls, empty)


# --------------------------------------------------------------------------
# scaling


@dataclass
class ScalingFit:
    radii: np.ndarray
    counts: np.ndarray
    exponent: float
    stderr: float
    window: tuple[float, float]
    intercept: float = 0.0

    def to_record(self) -> dict:
        return {"radii": self.radii.tolist(), "counts": self.counts.tolist(),
                "exponent": self.exponent, "stderr": self.stderr,
                "window": list(self.window), "intercept": self.intercept}


def dimension_fit(radii, counts, window: tuple[float, float] | None = None) -> ScalingFit:
    """Least-squares slope of ``log count`` against ``log radius`` inside ``window``."""
    r = np.asarray(radii, dtype=np.float64)
    c = np.asarray(counts, dtype=np.float64)
    if r.shape != c.shape:
        raise ValueError("radii and counts differ in length")
    lo, hi = window if window is not None else (r.min(), r.max())
    sel = (r >= lo) & (r <= hi) & (c > 0) & (r > 0)
    if np.unique(r[sel]).size < 4:
        raise InsufficientData("need at least 4 distinct radii with positive counts in the window")
    fit = stats.linregress(np.log(r[sel]), np.log(c[sel]))
    if not np.isfinite(fit.slope):
        raise InsufficientData("degenerate fit")
    return ScalingFit(r[sel], c[sel], float(fit.slope), float(fit.stderr), (float(lo), float(hi)),
                      float(fit.intercept))


def fit_window(n: int, diameter: int | None = None) -> tuple[float, float]:
    """``[n^(1/4)/4, n^(1/4)]`` clipped to ``[4, diam/2]``."""
    lo, hi = n ** 0.25 / 4, n ** 0.25
    lo = max(lo, 4.0)
    if diameter is not None:
        hi = min(hi, diameter / 2)
    return lo, hi


def ball_profile(q: QuadMap, x: int, radii, session: MapSession | None = None,
                 what: str = "volume", delta_beta: float = DEFAULT_BETA) -> np.ndarray:
    """``|B(x, r)|`` or ``|cut locus of x  within B(x, r)|`` for each radius."""
    s = _session(q, session)
    d = s.dag(x).dist
    if what == "volume":
        marks = np.ones(d.size, dtype=bool)
    elif what in ("weak", "strong"):
        marks = np.zeros(d.size, dtype=bool)
        marks[cut_locus(q, x, what, delta_beta, s)] = True
    else:
        raise ValueError(f"unknown profile {what!r}")
    dm = d[marks & (d >= 0)]
    hist = np.bincount(dm, minlength=int(d.max()) + 1)
    cum = np.cumsum(hist)
    r = np.minimum(np.asarray(radii, dtype=np.int64), cum.size - 1)
    return cum[r]


def network_pair_scaling(maps, j: int, k: int, radii=None, anchors: int = 10,
                         delta_beta: float = DEFAULT_BETA, seed: int = 0) -> ScalingFit:
    """Pair-count exponent of normal ``(j, k)``-networks against the search radius."""
    if j not in (1, 2, 3) or k not in (1, 2, 3):
        raise ValueError("j and k must lie in {1, 2, 3}")
    maps = list(maps)
    if not maps:
        raise InsufficientData("no maps")
    if radii is None:
        top = max(6, int(round(maps[0].n ** 0.25)))
        radii = sorted({max(2, int(round(top * f))) for f in (0.25, 0.375, 0.5, 0.625, 0.75, 1.0)})
    radii = list(radii)
    totals = np.zeros(len(radii))
    for mi, q in enumerate(maps):
        found = network_search(q, anchors=anchors, radius=max(radii), delta_beta=delta_beta,
                               seed=seed + mi)
        totals += radius_counts({(j, k): found[(j, k)]}, radii)[(j, k)]
    try:
        return dimension_fit(radii, totals)
    except InsufficientData as err:
        raise InsufficientData(f"({j},{k}): {int(totals[-1])} instances, {err}") from None


def strong_convergence_probe(q: QuadMap, geodesic, perturb_radius: int, trials: int = 20,
                             seed: int = 0) -> dict:
    """Overlap of a geodesic's interior with geodesics between perturbed endpoints.

    Each trial moves both endpoints to uniform vertices within
    ``perturb_radius`` and records the fraction of the original interior
    vertices lying on some geodesic between the new endpoints.
    """
    g = list(geodesic)
    if len(g) - 1 < 8:
        raise ValueError("geodesic must have length >= 8")
    x, y = g[0], g[-1]
    interior = np.asarray(g[1:-1], dtype=np.int64)
    rng = np.random.default_rng(seed)
    dx, dy = bfs_distances(q, x), bfs_distances(q, y)
    near_x = np.flatnonzero((dx >= 0) & (dx <= perturb_radius))
    near_y = np.flatnonzero((dy >= 0) & (dy <= perturb_radius))
    overlaps = []
    for _ in range(trials):
        a, b = int(rng.choice(near_x)), int(rng.choice(near_y))
        overlaps.append(_interior_overlap(q, interior, a, b))
    ov = np.asarray(overlaps)
    return {"trials": trials, "perturb_radius": perturb_radius, "median": float(np.median(ov)),
            "mean": float(ov.mean()), "min": float(ov.min()), "overlaps": ov.tolist()}


def _interior_overlap(q: QuadMap, interior: np.ndarray, a: int, b: int) -> float:
    if a == b:
        return float(np.isin(interior, [a]).mean())
    da, db = bfs_distances(q, a), bfs_distances(q, b)
    on = da[interior] + db[interior] == da[b]
    return float(on.mean())

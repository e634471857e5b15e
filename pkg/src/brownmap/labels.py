"""Brownian labels on the coded tree, the cyclic label pseudo-metric and its quotient.

Labels are sampled along the tree coded by the grid excursion: each new grid
point hangs off the ancestral line of the previous one at height
``min(e_i, e_{i+1})``, where the label is filled in by Brownian-bridge
interpolation between the two nearest already-labelled points of that line.
This yields a Gaussian vector with ``E[(Z_s - Z_t)^2] = d_e(s, t)`` exactly on
the grid, and identical labels on points with ``d_e = 0``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .excursion import Excursion, d_e, d_e_row, default_tol

__all__ = [
    "LabelField",
    "sample_labels",
    "d_Z",
    "d_Z_row",
    "d_Z_matrix",
    "d_star",
    "d_star_from",
    "d_star_matrix",
    "d_star_chain_oracle",
    "root_distance_check",
    "save_field",
    "load_field",
]


@dataclass(frozen=True, eq=False)
class LabelField:
    ex: Excursion
    z: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=np.float64)
        if z.shape != (self.ex.m + 1,):
            raise ValueError("label array does not match the excursion grid")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def m(self) -> int:
        return self.ex.m

    @property
    def t_star(self) -> int:
        # argmin returns the first minimiser, matching the Vervaat tie rule
        return int(np.argmin(self.z))

    @property
    def z_star(self) -> float:
        return float(self.z[self.t_star])

    @property
    def radius(self) -> float:
        """Largest label above the minimum: the root eccentricity under the identity ``d = Z - Z_*``."""
        return float(self.z.max() - self.z_star)


def sample_labels(ex: Excursion, seed: int | None = None) -> LabelField:
    rng = np.random.default_rng(seed)
    e = ex.values.tolist()
    m = ex.m
    normals = rng.standard_normal(2 * m).tolist()
    z = [0.0] * (m + 1)
    # ancestral line of the current point: strictly increasing heights
    hs = [0.0]
    zs = [0.0]
    k = 0
    for i in range(m):
        h = min(e[i], e[i + 1])
        while hs[-1] > h:
            top_h, top_z = hs.pop(), zs.pop()
            if hs[-1] < h:
                lo_h, lo_z = hs[-1], zs[-1]
                w = (h - lo_h) / (top_h - lo_h)
                var = (h - lo_h) * (top_h - h) / (top_h - lo_h)
                hs.append(h)
                zs.append(lo_z + w * (top_z - lo_z) + math.sqrt(var) * normals[k])
                k += 1
                break
        zh = zs[-1]
        if e[i + 1] > h:
            zn = zh + math.sqrt(e[i + 1] - h) * normals[m + i]
            hs.append(e[i + 1])
            zs.append(zn)
        else:
            zn = zh
        z[i + 1] = zn
    return LabelField(ex, np.array(z), seed)


def _check(lf: LabelField, *idx: int) -> None:
    for i in idx:
        if not 0 <= i <= lf.m:
            raise IndexError(f"grid index {i} outside 0..{lf.m}")


def d_Z(lf: LabelField, s: int, t: int) -> float:
    """``Z_s + Z_t - 2 max(min over [s,t], min over [t,s])`` with cyclic arcs."""
    _check(lf, s, t)
    z = lf.z
    lo, hi = min(s, t), max(s, t)
    inner = z[lo:hi + 1].min()
    outer = min(z[hi:].min(), z[:lo + 1].min())
    return float(z[s] + z[t] - 2.0 * max(inner, outer))


def d_Z_row(lf: LabelField, s: int) -> np.ndarray:
    """``d_Z(s, t)`` for all ``t`` in O(m)."""
    _check(lf, s)
    z = lf.z
    inner = np.empty_like(z)
    inner[s:] = np.minimum.accumulate(z[s:])
    inner[:s + 1] = np.minimum.accumulate(z[s::-1])[::-1]
    suffix = np.minimum.accumulate(z[::-1])[::-1]
    prefix = np.minimum.accumulate(z)
    outer = np.empty_like(z)
    # t >= s: complementary arc is [t, m] u [0, s]; t <= s: [s, m] u [0, t]
    outer[s:] = np.minimum(suffix[s:], prefix[s])
    outer[:s + 1] = np.minimum(suffix[s], prefix[:s + 1])
    return np.maximum(z[s] + z - 2.0 * np.maximum(inner, outer), 0.0)


def d_Z_matrix(lf: LabelField) -> np.ndarray:
    return np.stack([d_Z_row(lf, s) for s in range(lf.m + 1)])


def _hop_cutoff(lf: LabelField, quantile: float, samples: int = 20000) -> float:
    rng = np.random.default_rng(0)
    s = rng.integers(0, lf.m + 1, samples)
    t = rng.integers(0, lf.m + 1, samples)
    vals = np.array([d_Z(lf, int(a), int(b)) for a, b in zip(s, t)])
    return float(np.quantile(vals, quantile))


LINK_COSTS = ("label", "zero")


def d_star_from(lf: LabelField, s: int, tol: float | None = None,
                edge_quantile: float | None = None, targets=None,
                link_cost: str = "label") -> np.ndarray:
    """Single-source chain distances ``D*(s, .)`` on the grid.

    Dense Dijkstra over the complete graph on ``0..m``: a hop ``a -> b`` costs
    ``d_Z(a, b)``; when ``d_e(a, b) <= tol`` the pair is also linked as
    tree-equivalent.  A link costs ``|Z_a - Z_b|`` under ``link_cost="label"``
    (nothing for exact identifications, where labels agree) or nothing at
    all under ``"zero"``.  Zero-cost links chain along the contour and let
    labels drift for free, so ``"zero"`` collapses the metric as the grid is
    refined; it is kept for comparison only.

    Rows are generated on the fly, so time is O(m^2) and memory O(m).
    ``edge_quantile`` drops ``d_Z`` hops above that quantile of sampled pair
    distances.  With ``targets`` the search stops once all of them are
    settled; other entries are then upper bounds.
    """
    if link_cost not in LINK_COSTS:
        raise ValueError(f"link_cost must be one of {LINK_COSTS}")
    _check(lf, s)
    if tol is None:
        tol = default_tol(lf.m)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    cutoff = math.inf if edge_quantile is None else _hop_cutoff(lf, edge_quantile)
    n = lf.m + 1
    dist = np.full(n, np.inf)
    dist[s] = 0.0
    done = np.zeros(n, dtype=bool)
    pending = None if targets is None else set(int(t) for t in np.atleast_1d(targets))
    frontier = dist.copy()
    for _ in range(n):
        u = int(np.argmin(frontier))
        du = frontier[u]
        if not np.isfinite(du):
            break
        done[u] = True
        frontier[u] = np.inf
        if pending is not None:
            pending.discard(u)
            if not pending:
                break
        hop = d_Z_row(lf, u)
        if cutoff < math.inf:
            hop = np.where(hop <= cutoff, hop, np.inf)
        link = d_e_row(lf.ex, u) <= tol
        if link_cost == "zero":
            hop[link] = 0.0
        else:
            hop[link] = np.minimum(hop[link], np.abs(lf.z[link] - lf.z[u]))
        cand = du + hop
        better = (cand < dist) & ~done
        dist[better] = cand[better]
        frontier[better] = cand[better]
    return dist


def d_star(lf: LabelField, s: int, t: int, tol: float | None = None,
           edge_quantile: float | None = None, link_cost: str = "label") -> float:
    _check(lf, s, t)
    if s == t:
        return 0.0
    return float(d_star_from(lf, s, tol, edge_quantile, [t], link_cost)[t])


def d_star_matrix(lf: LabelField, tol: float | None = None, link_cost: str = "label") -> np.ndarray:
    return np.stack([d_star_from(lf, s, tol, link_cost=link_cost) for s in range(lf.m + 1)])


def d_star_chain_oracle(lf: LabelField, tol: float | None = None, link_cost: str = "label",
                        max_steps: int | None = None) -> np.ndarray:
    """All-pairs chain distances by min-plus products over chains of at most ``max_steps`` steps.

    Step costs are built from the scalar ``d_Z`` and ``d_e``; the default
    ``max_steps = m`` covers every simple chain, so the result is the exact
    infimum.  Meant for small ``m`` only (cubic work per step).
    """
    if link_cost not in LINK_COSTS:
        raise ValueError(f"link_cost must be one of {LINK_COSTS}")
    if tol is None:
        tol = default_tol(lf.m)
    n = lf.m + 1
    cost = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            hop = d_Z(lf, a, b)
            if d_e(lf.ex, a, b) <= tol:
                hop = 0.0 if link_cost == "zero" else min(hop, abs(lf.z[a] - lf.z[b]))
            cost[a, b] = hop
    np.fill_diagonal(cost, 0.0)
    best = cost.copy()
    for _ in range(1, lf.m if max_steps is None else max_steps):
        nxt = np.min(best[:, :, None] + cost[None, :, :], axis=1)
        if np.array_equal(nxt, best):
            break
        best = nxt
    return best


def root_distance_check(lf: LabelField, t, tol: float | None = None,
                        edge_quantile: float | None = None, link_cost: str = "label"):
    """``D*(t_*, t) - (Z_t - Z_*)``; accepts a single index or an array of them."""
    ts = np.atleast_1d(np.asarray(t, dtype=np.int64))
    for i in ts.tolist():
        _check(lf, i)
    dist = d_star_from(lf, lf.t_star, tol, edge_quantile, ts, link_cost)
    res = dist[ts] - (lf.z[ts] - lf.z_star)
    return float(res[0]) if np.ndim(t) == 0 else res


FIELD_VERSION = 1
_FHDR = struct.Struct("<BBxxxxxxqqq")


def save_field(path: str | Path, ex: Excursion, lf: LabelField | None = None) -> None:
    """Versioned flat binary: header (version, has-labels, m, seeds) then float64 values and labels."""
    if lf is not None and lf.ex is not ex:
        raise ValueError("label field belongs to a different excursion")
    seed = -1 if ex.seed is None else int(ex.seed)
    lseed = -1 if lf is None or lf.seed is None else int(lf.seed)
    with open(path, "wb") as fh:
        fh.write(_FHDR.pack(FIELD_VERSION, lf is not None, ex.m, seed, lseed))
        fh.write(ex.values.astype("<f8").tobytes())
        if lf is not None:
            fh.write(lf.z.astype("<f8").tobytes())


def load_field(path: str | Path) -> tuple[Excursion, LabelField | None]:
    raw = Path(path).read_bytes()
    if len(raw) < _FHDR.size:
        raise ValueError(f"{path}: truncated header")
    version, has_labels, m, seed, lseed = _FHDR.unpack_from(raw)
    if version != FIELD_VERSION:
        raise ValueError(f"{path}: unsupported field version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_FHDR.size)
    if body.size != (m + 1) * (2 if has_labels else 1):
        raise ValueError(f"{path}: wrong payload size")
    ex = Excursion(m, body[: m + 1].copy(), None if seed < 0 else seed)
    if not has_labels:
        return ex, None
    return ex, LabelField(ex, body[m + 1:].copy(), None if lseed < 0 else lseed)

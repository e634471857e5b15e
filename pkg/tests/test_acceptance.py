"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Seeds are fixed in advance (base 0) and never tuned.  Run directly with
``python3 tests/test_acceptance.py`` or through pytest.
"""

import itertools
import sys
import time

import numpy as np
import pytest

from brownmap.analysis import (
    MapSession,
    ball_profile,
    confluence_stat,
    cut_locus,
    dimension_fit,
    network_search,
    radius_counts,
    star_census,
)
from brownmap.excursion import d_e_matrix, sample_excursion
from brownmap.geodesics import bfs_dag, enumerate_geodesics
from brownmap.labels import d_star_chain_oracle, d_star_matrix, root_distance_check, sample_labels
from brownmap.maps import enumerate_small, label_distance_identity, sample_quadrangulation

# The DFS oracle is shared with the geodesics tests.
sys.path.insert(0, __file__.rsplit("/", 1)[0])
from test_geodesics import dfs_all_geodesics, floyd_warshall  # noqa: E402


def _timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


# ---------------------------------------------------------------- criteria


def criterion_1():
    def run():
        rows = [enumerate_small(n) for n in (1, 2, 3)]
        ok = all(
            r["trees"] == r["shapes"] * r["labelings_per_shape"]
            and r["invariants_ok"]
            and r["distinct_pointed"] == r["inputs"]
            and r["distinct_rooted"] == r["expected_rooted"]
            for r in rows
        )
        ok &= [(r["shapes"], r["labelings_per_shape"]) for r in rows] == [(1, 3), (2, 9), (5, 27)]
        ok &= [r["distinct_rooted"] for r in rows] == [2, 9, 54]
        return ok, rows

    (ok, rows), dt = _timed(run)
    ok &= dt < 60
    detail = ", ".join(f"n={r['n']}: {r['trees']} trees, {r['distinct_pointed']} pointed, "
                       f"{r['distinct_rooted']} rooted" for r in rows)
    return ok, f"{detail}; {dt:.1f}s"


def criterion_2():
    def run():
        return [label_distance_identity(q, t) for t, q in (sample_quadrangulation(10_000, s) for s in range(100))]

    devs, dt = _timed(run)
    ok = max(devs) == 0 and dt < 120
    return ok, f"max deviation {max(devs)} over {len(devs)} maps at n=1e4; {dt:.1f}s"


def criterion_3():
    def run():
        bad = checked = 0
        for seed in range(50):
            _, q = sample_quadrangulation(50, seed)
            fw = floyd_warshall(q)
            for source in (q.pointed, int(np.random.default_rng(seed).integers(q.n_vertices))):
                dag = bfs_dag(q, source)
                bad += not np.array_equal(dag.dist, fw[source])
                for t in range(q.n_vertices):
                    paths = dfs_all_geodesics(q, fw, source, t)
                    checked += 1
                    if dag.count(t) != len(paths) or enumerate_geodesics(dag, t, cap=10**6) != paths:
                        bad += 1
        return bad, checked

    (bad, checked), dt = _timed(run)
    return bad == 0 and dt < 60, f"{bad} mismatches over {checked} (source, target) pairs (50 maps, n=50, pointed and uniform sources); {dt:.1f}s"


_PROFILE_CACHE: dict = {}


def _profiles():
    """Ball volumes and weak cut-locus counts around one uniform vertex per map, 20 maps at n=2e5."""
    if not _PROFILE_CACHE:
        n = 200_000
        lo, hi = n ** 0.25 / 4, n ** 0.25
        radii = np.arange(int(np.ceil(lo)), int(hi) + 1)
        vol, weak = [], []
        t = time.perf_counter()
        for seed in range(20):
            _, q = sample_quadrangulation(n, seed)
            s = MapSession(q)
            x = int(np.random.default_rng(seed).integers(q.n_vertices))
            vol.append(dimension_fit(radii, ball_profile(q, x, radii, s), (lo, hi)).exponent)
            weak.append(dimension_fit(radii, ball_profile(q, x, radii, s, what="weak"), (lo, hi)).exponent)
        _PROFILE_CACHE.update(vol=np.array(vol), weak=np.array(weak), dt=time.perf_counter() - t,
                              window=(lo, hi))
    return _PROFILE_CACHE


def criterion_4():
    p = _profiles()
    slope = p["vol"].mean()
    ok = 3.4 <= slope <= 4.6 and p["dt"] < 900
    return ok, (f"mean ball-volume slope {slope:.3f} (sd {p['vol'].std(ddof=1):.3f}, 20 maps, n=2e5, "
                f"window [{p['window'][0]:.2f}, {p['window'][1]:.2f}]); band [3.4, 4.6]; {p['dt']:.1f}s")


def criterion_5():
    p = _profiles()
    slope = p["weak"].mean()
    ok = 1.3 <= slope <= 2.7 and p["dt"] < 900
    return ok, (f"mean weak cut-locus slope {slope:.3f} (sd {p['weak'].std(ddof=1):.3f}, same maps); "
                f"band [1.3, 2.7]")


def criterion_6():
    def run():
        props = {}
        for n in (1_000, 10_000, 100_000):
            hits = total = 0
            for seed in range(10):
                _, q = sample_quadrangulation(n, seed)
                res = confluence_stat(q, MapSession(q), eps=0.3, samples=100, seed=seed)
                hits += res.hits
                total += res.samples
            props[n] = hits / total
        return props

    props, dt = _timed(run)
    seq = [props[n] for n in sorted(props)]
    ok = seq[-1] >= 0.9 and all(a <= b for a, b in zip(seq, seq[1:])) and dt < 600
    return ok, ("proportions " + ", ".join(f"n={n}: {p:.3f}" for n, p in props.items())
                + f" (1000 triples each); need >= 0.9 at 1e5 and non-decreasing; {dt:.1f}s")


def criterion_7():
    radii = [4, 6, 8, 12, 16]

    def run():
        total = {jk: np.zeros(len(radii), dtype=int) for jk in itertools.product((1, 2, 3), repeat=2)}
        consistent = True
        nine = set()
        for seed in range(3):
            _, q = sample_quadrangulation(100_000, seed)
            s = MapSession(q)
            found = network_search(q, anchors=30, radius=max(radii), seed=seed, session=s)
            extra = network_search(q, anchors=500, radius=max(radii), seed=1000 + seed, session=s,
                                   per_bucket=200, patterns=[(3, 3)])
            seen = {(r.x, r.y) for r in found[(3, 3)]}
            found[(3, 3)] += [r for r in extra[(3, 3)] if (r.x, r.y) not in seen]
            for jk, reps in found.items():
                for r in reps:
                    consistent &= r.normal and (r.j, r.k) == jk and r.geodesic_count == r.j * r.k
                    consistent &= all(p[r.z_offset] == r.z for p in r.paths)
            nine |= {(seed, frozenset((r.x, r.y))) for r in found[(3, 3)] if r.geodesic_count == 9}
            for jk, c in radius_counts(found, radii).items():
                total[jk] += c
        return total, consistent, nine

    (total, consistent, nine), dt = _timed(run)
    every = all(c[-1] >= 1 for c in total.values())
    c33 = total[(3, 3)]
    half = radii.index(8)
    flat = c33[-1] == c33[half]
    nine = len(nine)
    ok = every and nine >= 1 and consistent and flat and dt < 1800
    counts = " ".join(f"{j}{k}:{c[-1]}" for (j, k), c in sorted(total.items()))
    return ok, (f"instances {counts}; {nine} distinct nine-geodesic (3,3) pairs; ordered (3,3) count by radius "
                f"{dict(zip(radii, c33.tolist()))}; {dt:.1f}s")


def criterion_8():
    def run():
        rel = []
        for seed in range(10):
            lf = sample_labels(sample_excursion(2**14, seed), seed)
            ts = np.random.default_rng(seed).integers(0, lf.m + 1, size=100)
            res = np.abs(root_distance_check(lf, ts))
            rel.append((res, lf.radius))
        oracle_gap = 0.0
        for m in (8, 16, 32):
            for seed in range(5):
                lf = sample_labels(sample_excursion(m, seed), seed)
                oracle_gap = max(oracle_gap, np.abs(d_star_matrix(lf) - d_star_chain_oracle(lf)).max())
        return rel, oracle_gap

    (rel, oracle_gap), dt = _timed(run)
    med = np.median(np.concatenate([r for r, _ in rel]))
    diam = np.mean([d for _, d in rel])
    ok = med < 0.05 * diam and oracle_gap < 1e-12 and dt < 600
    return ok, (f"median |residual| {med:.2e} vs 0.05 x diameter {0.05 * diam:.3f} (m=2^14, 10 fields x 100 t); "
                f"chain-oracle gap {oracle_gap:.1e} at m<=32; {dt:.1f}s")


def criterion_9():
    def run():
        bad = []
        for m in (8, 16, 32):
            for seed in range(3):
                ex = sample_excursion(m, seed)
                D = d_e_matrix(ex)
                if not (D[:, None, :] <= D[:, :, None] + D[None, :, :] + 1e-12).all():
                    bad.append(f"d_e triangle m={m}")
                i, j, k, l = np.array(list(itertools.combinations(range(m + 1), 4))).T
                sums = np.sort(np.stack([D[i, j] + D[k, l], D[i, k] + D[j, l], D[i, l] + D[j, k]]), axis=0)
                if not (sums[2] <= sums[1] + 1e-12).all():
                    bad.append(f"four-point m={m}")
                S = d_star_matrix(sample_labels(ex, seed))
                if not (S[:, None, :] <= S[:, :, None] + S[None, :, :] + 1e-12).all():
                    bad.append(f"d_star triangle m={m}")
        for seed in range(3):
            _, q = sample_quadrangulation(2_000, seed)
            s = MapSession(q)
            rng = np.random.default_rng(seed)
            for x in rng.integers(q.n_vertices, size=5).tolist():
                if not np.isin(cut_locus(q, x, "strong", session=s), cut_locus(q, x, "weak", session=s)).all():
                    bad.append(f"cut locus x={x}")
            verts = rng.integers(q.n_vertices, size=100)
            small = star_census(q, 0.1, vertices=verts, balls=5, seed=seed, session=s)
            big = star_census(q, 0.25, vertices=verts, balls=5, seed=seed, session=s)
            if not np.isin(big.centres, small.centres).all():
                bad.append(f"star census seed={seed}")
        return bad

    bad, dt = _timed(run)
    return not bad and dt < 120, (f"violations: {bad or 'none'} (d_e triangle + four-point at m<=32, d_star "
                                  f"triangle, strong<=weak cut loci, star-census nesting); {dt:.1f}s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9]


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, acceptance_report):
    ok, detail = CRITERIA[number - 1]()
    acceptance_report(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, start=1):
        ok, detail = fn()
        failed += not ok
        print(f"criterion {i}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(1 if failed else 0)

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from brownmap.geodesics import bfs_distances
from brownmap.maps import (
    C_QUAD,
    LabeledPlaneTree,
    MapFormatError,
    all_dyck_paths,
    canonical_code,
    cvs_bijection,
    enumerate_labeled_trees,
    enumerate_small,
    label_distance_identity,
    load_qmap,
    read_qm1_header,
    rooted_quadrangulation_count,
    sample_labeled_tree,
    sample_quadrangulation,
    save_qmap,
)


def tree_key(t):
    return (tuple(t.parent.tolist()), tuple(t.labels.tolist()))


def edge_tree():
    return LabeledPlaneTree(1, np.array([-1, 0]), np.array([0, 1]), np.array([0, 1]))


# ---------------------------------------------------------------- sampling


def test_n1_outcomes_equiprobable():
    rng = np.random.default_rng(2024)
    draws = 100_000
    counts = Counter(int(sample_labeled_tree(1, rng).labels[1]) for _ in range(draws))
    assert set(counts) == {-1, 0, 1}
    sigma = math.sqrt(draws / 3 * (2 / 3))
    for c in counts.values():
        assert abs(c - draws / 3) < 3 * sigma


def test_n2_chi_square_over_18_outcomes():
    expected = {tree_key(t) for t in enumerate_labeled_trees(2)}
    assert len(expected) == 18
    rng = np.random.default_rng(99)
    draws = 36_000
    counts = Counter(tree_key(sample_labeled_tree(2, rng)) for _ in range(draws))
    assert set(counts) == expected
    obs = [counts[k] for k in sorted(expected)]
    assert stats.chisquare(obs).pvalue > 0.01


def test_dyck_shapes_uniform_n3():
    rng = np.random.default_rng(5)
    draws = 20_000
    counts = Counter(tuple(sample_labeled_tree(3, rng).parent.tolist()) for _ in range(draws))
    assert len(counts) == 5
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_sampling_is_deterministic():
    a, b = sample_labeled_tree(500, 11), sample_labeled_tree(500, 11)
    assert tree_key(a) == tree_key(b)
    assert tree_key(a) != tree_key(sample_labeled_tree(500, 12))


def test_invalid_n():
    with pytest.raises(ValueError):
        sample_labeled_tree(0, 1)


@given(n=st.integers(1, 300), seed=st.integers(0, 2**32 - 1))
def test_tree_invariants(n, seed):
    t = sample_labeled_tree(n, seed)
    t.validate()
    assert t.labels[0] == 0
    assert t.contour.size == 2 * n
    assert np.all(np.abs(t.labels[1:] - t.labels[t.parent[1:]]) <= 1)
    # each edge is visited twice: vertex v appears deg(v) times in the contour
    deg = np.bincount(t.parent[1:], minlength=n + 1) + (np.arange(n + 1) > 0)
    assert np.array_equal(t.corner_counts, deg)


def test_validate_rejects_bad_trees():
    t = edge_tree()
    with pytest.raises(MapFormatError):
        LabeledPlaneTree(1, t.parent, np.array([1, 1]), t.contour).validate()
    with pytest.raises(MapFormatError):
        LabeledPlaneTree(1, t.parent, np.array([0, 2]), t.contour).validate()
    with pytest.raises(MapFormatError):
        LabeledPlaneTree(1, t.parent, t.labels, np.array([0, 1, 0])).validate()
    with pytest.raises(MapFormatError):
        cvs_bijection(LabeledPlaneTree(1, t.parent, t.labels, np.array([0])))


# ---------------------------------------------------------------- bijection


def test_single_edge_hand_check():
    t = edge_tree()
    q = cvs_bijection(t)
    q.check_invariants()
    assert q.n_vertices == 3 and q.n_edges == 2 and len(q.faces) == 1
    assert len(q.faces[0]) == 4
    # the label-1 vertex hangs off the root, which hangs off the pointed vertex
    assert sorted(map(tuple, zip(q.origin[0::2].tolist(), q.origin[1::2].tolist()))) == [(0, 2), (1, 0)]
    assert label_distance_identity(q, t) == 0


@given(n=st.integers(1, 400), seed=st.integers(0, 2**32 - 1), sign=st.sampled_from([1, -1]))
def test_quadmap_invariants(n, seed, sign):
    t = sample_labeled_tree(n, seed)
    q = cvs_bijection(t, sign)
    q.check_invariants()
    assert q.n_vertices == n + 2
    assert q.labels[q.pointed] == t.labels.min() - 1
    assert label_distance_identity(q, t) == 0


@given(n=st.integers(1, 200), seed=st.integers(0, 2**32 - 1))
def test_successor_is_next_smaller_corner(n, seed):
    t = sample_labeled_tree(n, seed)
    q = cvs_bijection(t)
    lab = t.corner_labels
    m = 2 * n
    for c in range(m):
        want = -1
        for step in range(1, m + 1):
            d = (c + step) % m
            if lab[d] == lab[c] - 1:
                want = d
                break
        assert q.successor[c] == want
    assert ((q.successor < 0) == (lab == lab.min())).all()


def test_bijection_deterministic():
    t = sample_labeled_tree(300, 3)
    assert canonical_code(cvs_bijection(t)) == canonical_code(cvs_bijection(t))


def test_root_sign():
    t = sample_labeled_tree(20, 4)
    qp, qm = cvs_bijection(t, 1), cvs_bijection(t, -1)
    assert qp.origin[qp.root] == 0
    assert qm.target[qm.root] == 0
    with pytest.raises(ValueError):
        cvs_bijection(t, 0)


def test_scale_constant():
    q = 4
    assert C_QUAD == pytest.approx((9 / (q * (q - 2))) ** 0.25)
    _, qm = sample_quadrangulation(10_000, 1)
    assert qm.scale == pytest.approx(C_QUAD * 10_000 ** -0.25)


# ---------------------------------------------------------------- exhaustive


def test_catalan_and_formula():
    assert [sum(1 for _ in all_dyck_paths(n)) for n in range(1, 6)] == [1, 2, 5, 14, 42]
    assert [rooted_quadrangulation_count(n) for n in (1, 2, 3, 4)] == [2, 9, 54, 378]


@pytest.mark.parametrize("n,shapes,rooted", [(1, 1, 2), (2, 2, 9), (3, 5, 54)])
def test_enumerate_small(n, shapes, rooted):
    s = enumerate_small(n)
    assert s["shapes"] == shapes
    assert s["trees"] == shapes * 3 ** n
    assert s["invariants_ok"]
    assert s["distinct_pointed"] == s["inputs"] == 2 * s["trees"]
    assert s["distinct_rooted"] == rooted


# ---------------------------------------------------------------- qm1 files


def test_qm1_round_trip(tmp_path):
    t, q = sample_quadrangulation(1000, 8)
    p = tmp_path / "a.qm1"
    save_qmap(q, p)
    for mm in (False, True):
        r = load_qmap(p, mmap=mm)
        r.check_invariants()
        assert canonical_code(r) == canonical_code(q)
        for name in ("next", "origin", "labels", "successor", "contour"):
            assert np.array_equal(getattr(r, name), getattr(q, name))
        assert (r.n, r.seed, r.root, r.pointed, r.root_sign, r.scale) == (
            q.n, q.seed, q.root, q.pointed, q.root_sign, q.scale)
        assert np.array_equal(bfs_distances(r, r.pointed), bfs_distances(q, q.pointed))
    save_qmap(q, tmp_path / "b.qm1")
    assert p.read_bytes() == (tmp_path / "b.qm1").read_bytes()
    assert read_qm1_header(p)["n"] == 1000 and read_qm1_header(p)["seed"] == 8


def test_qm1_errors(tmp_path):
    _, q = sample_quadrangulation(10, 1)
    p = tmp_path / "a.qm1"
    save_qmap(q, p)
    raw = p.read_bytes()
    (tmp_path / "short").write_bytes(raw[:10])
    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "body").write_bytes(raw[:-8])
    (tmp_path / "version").write_bytes(raw[:4] + bytes([9]) + raw[5:])
    for name in ("short", "magic", "body", "version"):
        with pytest.raises(MapFormatError):
            load_qmap(tmp_path / name)

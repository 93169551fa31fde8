import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import scan_knn, scan_point, scan_range
from skymine.errors import BadParams, BadWindow, DimensionMismatch, EmptyTree
from skymine.kdtree import CYCLE_MEDIAN, MAX_VARIANCE_MEDIAN, KdBuildParams, KDTree

coords = st.floats(-100, 100, allow_nan=False, width=32)


def point_sets(k):
    # a small value pool forces duplicates and ties
    pool = st.sampled_from([-3.0, 0.0, 0.5, 1.0, 2.0, 7.25])
    elem = st.one_of(coords, pool)
    return arrays(np.float64, st.tuples(st.integers(1, 120), st.just(k)), elements=elem)


@pytest.mark.parametrize("rule", [CYCLE_MEDIAN, MAX_VARIANCE_MEDIAN])
@given(data=st.data())
def test_queries_match_linear_scan(rule, data):
    k = data.draw(st.integers(1, 4))
    pts = data.draw(point_sets(k))
    leaf = data.draw(st.integers(1, 8))
    tree = KDTree.build(pts, KdBuildParams(leaf, 0.0, rule))
    tree.check_invariants()
    a = np.array(data.draw(st.lists(coords, min_size=k, max_size=k)))
    b = np.array(data.draw(st.lists(coords, min_size=k, max_size=k)))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert tree.range_query(lo, hi) == scan_range(pts, lo, hi)
    probe = pts[data.draw(st.integers(0, len(pts) - 1))]
    assert tree.range_query(probe, probe) == scan_point(pts, probe)
    kk = data.draw(st.integers(1, len(pts)))
    got = tree.knn(a, kk)
    want = scan_knn(pts, a, kk)
    assert [i for i, _ in got] == [i for i, _ in want]
    assert np.allclose([d for _, d in got], [d for _, d in want])


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=200))
def test_incremental_insert_matches_scan(rows):
    pts = np.array(rows, dtype=float)
    tree = KDTree(2, KdBuildParams(4))
    for i, p in enumerate(pts):
        assert tree.insert(p) == i
        assert tree.last_path_length >= 1
    tree.check_invariants()
    assert tree.range_query([-50, -50], [50, 50]) == scan_range(pts, [-50, -50], [50, 50])
    assert tree.knn([0, 0], 5) == [(i, pytest.approx(d)) for i, d in scan_knn(pts, [0, 0], 5)]


def test_identical_points_form_one_leaf():
    pts = np.ones((50, 3))
    tree = KDTree.build(pts, KdBuildParams(4))
    leaves = tree.leaves()
    assert len(leaves) == 1 and len(leaves[0][1].ids) == 50
    assert tree.range_query([1, 1, 1], [1, 1, 1]) == list(range(50))


def test_extent_threshold_stops_splitting(rng):
    pts = rng.random((500, 2)) * 0.01
    tree = KDTree.build(pts, KdBuildParams(float("inf"), 0.1))
    assert len(tree.leaves()) == 1


def test_tree_is_balanced(rng):
    tree = KDTree.build(rng.random((4096, 2)), KdBuildParams(16))
    assert tree.height() <= 10  # log2(4096 / 16) + 2


def test_random_inserts_give_logarithmic_paths(rng):
    tree = KDTree(2, KdBuildParams(4))
    paths = []
    for p in rng.random((1024, 2)):
        tree.insert(p)
        paths.append(tree.last_path_length)
    assert np.mean(paths) < 12


def test_errors():
    tree = KDTree(2)
    with pytest.raises(EmptyTree):
        tree.knn([0, 0], 1)
    tree.insert([0.0, 0.0])
    with pytest.raises(BadParams):
        tree.knn([0, 0], 0)
    with pytest.raises(DimensionMismatch):
        tree.insert([1.0, 2.0, 3.0])
    with pytest.raises(BadWindow):
        tree.range_query([1, 1], [0, 0])
    with pytest.raises(BadParams):
        KdBuildParams(float("inf"), 0.0)
    with pytest.raises(BadParams):
        KdBuildParams(4, 0.0, "random")

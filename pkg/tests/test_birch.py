import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from skymine.cluster import CfTree, ClusteringFeature, birch, birch_global, cf_merge, cf_radius
from skymine.errors import BadParams, DimensionMismatch

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=finite))
def test_cf_additivity(a, b):
    m = cf_merge(ClusteringFeature.of_points(a), ClusteringFeature.of_points(b))
    direct = ClusteringFeature.of_points(np.vstack([a, b]))
    assert m.n == direct.n
    assert np.allclose(m.ls, direct.ls)
    assert m.ss == pytest.approx(direct.ss, rel=1e-9, abs=1e-6)


def test_cf_radius_is_rms_distance(rng):
    pts = rng.normal(size=(200, 2))
    rms = np.sqrt(((pts - pts.mean(axis=0)) ** 2).sum(axis=1).mean())
    assert cf_radius(ClusteringFeature.of_points(pts)) == pytest.approx(rms, rel=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(1, 300), st.just(2)),
              elements=st.floats(-10, 10) | st.sampled_from([0.0, 1.0])),
       st.floats(0, 2), st.integers(2, 6))
def test_tree_invariants_and_root_cf(pts, threshold, branching):
    tree = CfTree(2, threshold, branching)
    for p in pts:
        tree.insert(p)
    tree.check_invariants()
    root = tree.root_cf()
    direct = ClusteringFeature.of_points(pts)
    assert root.n == len(pts)
    assert np.allclose(root.ls, direct.ls, rtol=1e-9, atol=1e-9)
    assert sum(e.n for e in tree.leaf_entries()) == len(pts)


def test_zero_threshold_keeps_distinct_points_apart():
    tree = CfTree(1, 0.0, 3)
    for x in [0.0, 1.0, 1.0, 2.0, 3.0]:
        tree.insert([x])
    assert sorted(e.n for e in tree.leaf_entries()) == [1, 1, 1, 2]


def test_global_phase_merges_to_k(rng):
    cfs = [ClusteringFeature.of_points(rng.normal(loc=c, size=(20, 2))) for c in (0, 0, 10, 10, 20)]
    groups = birch_global(cfs, 3)
    assert sorted(sorted(g) for g in groups) == [[0, 1], [2, 3], [4]]


def test_birch_recovers_separated_blobs(rng):
    centers = np.array([[0, 0], [20, 0], [0, 20]])
    truth = rng.integers(0, 3, 3000)
    pts = centers[truth] + rng.normal(size=(3000, 2))
    res = birch(pts, 3, threshold=1.0)
    # labels agree with truth up to permutation
    pairs = set(zip(truth.tolist(), res.labels.tolist()))
    assert len(pairs) == 3


def test_errors():
    with pytest.raises(BadParams):
        CfTree(2, -1.0)
    with pytest.raises(BadParams):
        CfTree(2, 1.0, 1)
    with pytest.raises(DimensionMismatch):
        CfTree(2, 1.0).insert([1.0, 2.0, 3.0])
    with pytest.raises(BadParams):
        birch_global([ClusteringFeature.of_point([0.0])], 0)

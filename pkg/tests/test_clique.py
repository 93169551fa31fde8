import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import box_cells, brute_dense_units, union_find_components
from skymine.cluster import (clique, clique_dense_units, clique_identify_clusters, clique_labels,
                             clique_minimal_description)
from skymine.errors import BadParams


def planted(rng, n_noise=5000, n_cluster=1000):
    noise = rng.random((n_noise, 5))
    blob = rng.random((n_cluster, 5))
    blob[:, [1, 3]] = 0.42 + 0.06 * rng.random((n_cluster, 2))
    return np.vstack([noise, blob])


def flatten(units: dict) -> dict:
    return {sub: {u: g.count for u, g in d.items()} for sub, d in units.items()}


@given(arrays(np.float64, st.tuples(st.integers(5, 120), st.integers(1, 4)),
              elements=st.floats(0, 1) | st.sampled_from([0.0, 0.5, 1.0])),
       st.integers(1, 10), st.floats(0.01, 0.5))
def test_dense_units_match_brute_force(X, xi, tau):
    assert flatten(clique_dense_units(X, xi, tau)) == brute_dense_units(X, xi, tau)


def test_dense_units_match_brute_force_large(rng):
    X = planted(rng, 800, 200)[:, :4]
    assert flatten(clique_dense_units(X, 10, 0.02)) == brute_dense_units(X, 10, 0.02)


@given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=25))
def test_components_match_union_find(units):
    assert sorted(clique_identify_clusters(units)) == union_find_components(units)


@given(st.sets(st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 2)), min_size=1, max_size=30))
def test_description_covers_exactly(units):
    for comp in union_find_components(units):
        regions = clique_minimal_description(comp)
        covered = set().union(*(box_cells(lo, hi) for lo, hi in regions))
        assert covered == set(comp)
        # no region is redundant
        for r in regions:
            rest = set().union(*(box_cells(lo, hi) for lo, hi in regions if (lo, hi) != r))
            assert not box_cells(*r) <= rest


def test_rectangle_described_by_one_region():
    comp = [(x, y) for x in range(2, 5) for y in range(1, 3)]
    assert clique_minimal_description(comp) == [((2, 1), (4, 2))]


def test_recovers_planted_subspace_cluster(rng):
    X = planted(rng)
    res = clique(X, xi=10, tau=0.05)
    top = res.clusters[0]
    assert top.subspace == (1, 3)
    (d1, lo1, hi1), (d3, lo3, hi3) = res.clusters[0].describe(res.grid)[0]
    assert (d1, d3) == (1, 3)
    assert lo1 <= 0.42 and hi1 >= 0.48 and hi1 - lo1 < 0.25
    labels = clique_labels(X, res)
    assert np.mean(labels[5000:] == 0) == 1.0


def test_grid_last_interval_is_closed():
    X = np.array([[0.0], [0.5], [1.0]])
    units = clique_dense_units(X, 2, 0.1)
    assert units[(0,)][(1,)].count == 2


def test_errors():
    with pytest.raises(BadParams):
        clique_dense_units(np.zeros((3, 2)), 0, 0.1)
    with pytest.raises(BadParams):
        clique_dense_units(np.zeros((3, 2)), 5, 1.0)

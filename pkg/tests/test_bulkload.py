import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import scan_knn, scan_range, sorted_rank
from skymine.bulkload import (MIB, RunStore, SelectStats, VamSplitParams, choose_split_dim,
                              external_select, leaf_count, partition_run, split_count, vamsplit_build)
from skymine.errors import BadParams, CountInfeasible, EmptyRun, RankOutOfRange


def make_run(tmp_path, X, page_size=4096, cache_pages=8):
    store = RunStore(tmp_path / "runs.bin", X.shape[1], page_size, cache_pages)
    recs = np.empty(len(X), dtype=store.dtype)
    recs["p"] = X
    recs["id"] = np.arange(len(X))
    return store, store.from_array(recs)


@given(st.integers(1, 20_000), st.integers(2, 200))
def test_split_count_keeps_both_sides_packable(n, cap):
    if n <= cap:
        return
    left = split_count(n, cap)
    assert cap <= left <= n - cap or n < 2 * cap
    assert left % cap == 0 or left == n - cap
    assert leaf_count(left, cap) + leaf_count(n - left, cap) == math.ceil(n / cap)


def test_split_count_example():
    assert split_count(100, 10) == 80


@pytest.mark.parametrize("cap", [4, 10, 64])
@pytest.mark.parametrize("n", [1, 3, 64, 65, 777, 2500])
def test_leaf_count_is_minimal(tmp_path, rng, n, cap):
    pts = rng.normal(size=(n, 2))
    tree, rep = vamsplit_build(pts, tmp_path / "t.rt", VamSplitParams(leaf_capacity=cap), scratch_dir=tmp_path)
    assert rep.leaves == math.ceil(n / cap)
    assert tree.audit().ok
    tree.close()


def test_external_build_matches_in_memory(tmp_path, rng):
    pts = rng.random((3000, 3))
    a, ra = vamsplit_build(pts, tmp_path / "a.rt", VamSplitParams(leaf_capacity=15), scratch_dir=tmp_path)
    b, rb = vamsplit_build(pts, tmp_path / "b.rt", VamSplitParams(leaf_capacity=15, memory_budget=16 * 1024,
                                                                   page_size=1024), scratch_dir=tmp_path)
    assert ra.leaves == rb.leaves == 200
    assert any(e.external for e in rb.splits) and not any(e.external for e in ra.splits)
    assert sorted(sorted(l.ids.tolist()) for l in a.iter_leaves()) == \
        sorted(sorted(l.ids.tolist()) for l in b.iter_leaves())
    for tree in (a, b):
        assert tree.range_query(([0.2] * 3, [0.5] * 3)) == scan_range(pts, [0.2] * 3, [0.5] * 3)
        assert [i for i, _ in tree.knn([0.5] * 3, 9)] == [i for i, _ in scan_knn(pts, [0.5] * 3, 9)]
        tree.close()


def test_bulk_tree_is_shallow_and_full(tmp_path, rng):
    tree, rep = vamsplit_build(rng.random((20000, 2)), tmp_path / "t.rt", scratch_dir=tmp_path)
    audit = tree.audit()
    assert audit.ok and audit.leaves == 197 == math.ceil(20000 / 102)
    assert audit.height == 3  # 197 leaves, 2 internal pages, root


def test_split_lines_are_reported(tmp_path, rng):
    lines = []
    vamsplit_build(rng.random((500, 2)), tmp_path / "t.rt", VamSplitParams(leaf_capacity=50),
                   scratch_dir=tmp_path, on_split=lambda e: lines.append(e.line()))
    assert len(lines) == 9  # a binary split tree over 10 leaves
    assert lines[0].startswith("split dim=") and "n=500 left=" in lines[0]


def test_external_select_equals_sort(tmp_path, rng):
    X = rng.normal(size=(20000, 2))
    X[::7, 1] = 0.5  # heavy duplicates
    _, run = make_run(tmp_path, X, page_size=1024)
    params = VamSplitParams(memory_budget=64 * 1024, page_size=1024, sample_size=200)
    for rank in [1, 2, 5000, 10000, 19999, 20000] + rng.integers(1, 20001, 10).tolist():
        stats = SelectStats()
        assert external_select(run, 1, int(rank), params, stats=stats) == sorted_rank(X[:, 1], int(rank))
        assert stats.passes >= 1  # 480 KB of records against a 64 KB budget


def test_external_select_rank_bounds(tmp_path, rng):
    _, run = make_run(tmp_path, rng.random((10, 2)))
    with pytest.raises(RankOutOfRange):
        external_select(run, 0, 0, VamSplitParams())
    with pytest.raises(RankOutOfRange):
        external_select(run, 0, 11, VamSplitParams())


def test_partition_run_is_exact_and_stable(tmp_path):
    X = np.array([[3.0], [1.0], [2.0], [2.0], [5.0], [2.0], [0.0]])
    _, run = make_run(tmp_path, X)
    left, right = partition_run(run, 0, 2.0, 4)
    l, r = left.read_all(), right.read_all()
    assert l["id"].tolist() == [1, 2, 3, 6]  # first two 2.0s in stream order
    assert r["id"].tolist() == [0, 4, 5]
    (tmp_path / "b").mkdir()
    _, run2 = make_run(tmp_path / "b", X)
    with pytest.raises(CountInfeasible):
        partition_run(run2, 0, 2.0, 6)


def test_choose_split_dim_is_max_variance(rng):
    X = rng.normal(size=(1000, 3)) * [1.0, 5.0, 2.0]
    recs = np.empty(1000, dtype=[("p", "<f8", (3,)), ("id", "<u8")])
    recs["p"] = X
    assert choose_split_dim(recs) == 1


def test_cache_reduces_writes(tmp_path, rng):
    pts = rng.random((10000, 2))
    writes = []
    for cp in (1, 64):
        _, rep = vamsplit_build(pts, tmp_path / f"t{cp}.rt",
                                VamSplitParams(cache_pages=cp, memory_budget=64 * 1024), scratch_dir=tmp_path)
        writes.append(rep.scratch_writes)
    assert writes[1] < writes[0]


def test_errors(tmp_path):
    with pytest.raises(EmptyRun):
        vamsplit_build(np.empty((0, 2)), tmp_path / "t.rt")
    with pytest.raises(BadParams):
        VamSplitParams(leaf_capacity=1)
    with pytest.raises(BadParams):
        vamsplit_build(np.zeros((5, 2)), tmp_path / "t.rt", VamSplitParams(leaf_capacity=500))
    assert MIB == 1 << 20

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import all_pairs_join, scan_knn, scan_point, scan_range
from skymine.errors import BadParams, CorruptHeader, DimensionMismatch, EmptyTree
from skymine.paging import IoCounter, PageCache, PageFile
from skymine.rtree import MBB, RTree, mbb_union
from skymine.rtree.tree import default_min_fill, fanout, quadratic_split


def build(path, pts, page_size=512, cache=8):
    tree = RTree.create(path, pts.shape[1], page_size, cache)
    for i, p in enumerate(pts):
        tree.insert(MBB.point(p), i)
    return tree


def test_fanout_formula():
    assert fanout(4096, 2) == 102
    assert default_min_fill(102) == 41
    assert fanout(512, 3) == 9


def test_quadratic_split_respects_min_fill(rng):
    lows = rng.random((11, 2))
    highs = lows + 0.05
    a, b = quadratic_split(lows, highs, 4)
    assert sorted(a + b) == list(range(11))
    assert min(len(a), len(b)) >= 4


@given(arrays(np.float64, st.tuples(st.integers(1, 250), st.just(2)),
              elements=st.sampled_from([0.0, 0.25, 0.5, 1.0]) | st.floats(0, 1)),
       st.floats(0, 1), st.floats(0, 1))
def test_insert_built_tree_matches_scan(tmp_path_factory, pts, x, y):
    tree = build(tmp_path_factory.mktemp("r") / "t.rt", pts)
    rep = tree.audit()
    assert rep.ok, rep.errors
    assert rep.records == len(pts)
    lo, hi = [min(x, y), 0.2], [max(x, y), 0.9]
    assert tree.range_query((lo, hi)) == scan_range(pts, lo, hi)
    assert tree.point_query(pts[0]) == scan_point(pts, pts[0])
    k = min(7, len(pts))
    got = tree.knn([x, y], k)
    want = scan_knn(pts, [x, y], k)
    assert [i for i, _ in got] == [i for i, _ in want]
    tree.close()


def test_reopen_and_header_roundtrip(tmp_path, rng):
    pts = rng.random((600, 3))
    tree = build(tmp_path / "t.rt", pts)
    tree.close()
    again = RTree.open(tmp_path / "t.rt")
    assert (again.k, again.count) == (3, 600)
    assert again.audit().ok
    assert again.range_query(([0.1] * 3, [0.4] * 3)) == scan_range(pts, [0.1] * 3, [0.4] * 3)
    again.close()


def test_corrupt_header(tmp_path):
    p = tmp_path / "bad.rt"
    p.write_bytes(b"nope" + bytes(600))
    with pytest.raises(CorruptHeader):
        RTree.open(p)


def test_spatial_join_matches_all_pairs(tmp_path, rng):
    a = rng.random((400, 2))
    b = rng.random((300, 2))
    ta = build(tmp_path / "a.rt", a)
    tb = build(tmp_path / "b.rt", b)
    for eps in (0.0, 0.01, 0.05):
        assert ta.spatial_join(tb, eps) == all_pairs_join(a, b, eps)


def test_cold_cache_counts_reads(tmp_path, rng):
    tree = build(tmp_path / "t.rt", rng.random((2000, 2)), cache=4)
    tree.flush()
    tree.reset_io(drop_cache=True)
    tree.range_query(([0.4, 0.4], [0.6, 0.6]))
    cold = tree.io.reads
    assert cold >= tree.height
    assert tree.io.writes == 0


def test_errors(tmp_path):
    tree = RTree.create(tmp_path / "t.rt", 2, 512)
    with pytest.raises(EmptyTree):
        tree.knn([0, 0], 1)
    tree.insert(MBB.point([0.0, 0.0]), 0)
    with pytest.raises(BadParams):
        tree.knn([0, 0], 0)
    with pytest.raises(DimensionMismatch):
        tree.range_query(([0, 0, 0], [1, 1, 1]))


def test_mbb_union():
    u = mbb_union(MBB.point([0, 1]), MBB([2, -1], [3, 0]))
    assert tuple(u.low) == (0, -1) and tuple(u.high) == (3, 1)


def test_page_cache_write_back(tmp_path):
    counter = IoCounter()
    pf = PageFile(tmp_path / "p.bin", 64, counter, create=True)
    cache = PageCache(2, lambda n: bytes(pf.read(n)), lambda n, obj: pf.write(n, obj))
    for n in range(5):
        cache.put(n, bytes([n]) * 64)
    assert counter.writes == 3  # two pages still dirty in cache
    cache.flush()
    assert counter.writes == 5
    cache.clear()
    counter.reset()
    assert cache.get(3) == bytes([3]) * 64
    assert cache.get(3) == bytes([3]) * 64
    assert counter.reads == 1
    assert str(counter) == "reads=1 writes=0"
    pf.close()

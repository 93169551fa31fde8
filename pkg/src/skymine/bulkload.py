"""VAMSplit top-down bulk loading of the R-tree for static datasets.

Records live in external runs: contiguous page ranges of a scratch file of
fixed-width rows (k float64 coordinates + uint64 record id). All scratch
I/O passes through an LRU page cache so physical reads and writes can be
counted. Once a run fits in ``memory_budget`` bytes the same recursion
continues in memory.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BadParams, CountInfeasible, EmptyRun, NoSplitNeeded, RankOutOfRange
from .paging import IoCounter, PageCache, PageFile
from .rtree.tree import DEFAULT_PAGE_SIZE, RTree, default_min_fill, fanout

log = logging.getLogger(__name__)

MIB = 1 << 20


@dataclass(frozen=True)
class VamSplitParams:
    leaf_capacity: Optional[int] = None  # None: the R-tree fanout
    internal_fanout: Optional[int] = None  # None: the R-tree fanout
    sample_size: int = 1000
    cache_pages: int = 64
    memory_budget: int = 64 * MIB
    seed: int = 42
    page_size: int = DEFAULT_PAGE_SIZE

    def __post_init__(self):
        if self.leaf_capacity is not None and self.leaf_capacity < 2:
            raise BadParams("leaf_capacity must be >= 2")
        if self.internal_fanout is not None and self.internal_fanout < 2:
            raise BadParams("internal_fanout must be >= 2")
        if self.sample_size < 1:
            raise BadParams("sample_size must be >= 1")
        if self.cache_pages < 1:
            raise BadParams("cache_pages must be >= 1")
        if self.memory_budget < self.page_size:
            raise BadParams("memory_budget must be at least one page")


# ------------------------------------------------------------------ runs


class RunStore:
    """Scratch page file holding external runs."""

    def __init__(self, path, k: int, page_size: int = DEFAULT_PAGE_SIZE, cache_pages: int = 64,
                 counter: Optional[IoCounter] = None):
        self.k = k
        self.dtype = np.dtype([("p", "<f8", (k,)), ("id", "<u8")])
        self.page_size = page_size
        self.per_page = page_size // self.dtype.itemsize
        if self.per_page < 1:
            raise BadParams(f"page_size {page_size} cannot hold a {self.dtype.itemsize}-byte record")
        self.file = PageFile(path, page_size, counter, create=True)
        self.io = self.file.counter
        self.cache = PageCache(cache_pages, self._load, self._store)
        self._next_page = 0
        self.live_pages = 0

    def _load(self, page_no):
        raw = self.file.read(page_no)
        return np.frombuffer(bytes(raw), dtype=self.dtype, count=self.per_page).copy()

    def _store(self, page_no, arr):
        b = arr.tobytes()
        self.file.write(page_no, b + bytes(self.page_size - len(b)))

    def allocate(self, count: int) -> "ExternalRun":
        pages = max(1, math.ceil(count / self.per_page))
        run = ExternalRun(self, self._next_page, count)
        self._next_page += pages
        self.live_pages += pages
        return run

    def release(self, run: "ExternalRun") -> None:
        for p in range(run.start_page, run.start_page + run.n_pages):
            self.cache.discard(p)
        self.live_pages -= run.n_pages

    def from_array(self, recs: np.ndarray) -> "ExternalRun":
        run = self.allocate(len(recs))
        w = run.writer()
        w.append(recs)
        w.close()
        return run

    def close(self):
        self.file.close()


@dataclass
class ExternalRun:
    store: RunStore
    start_page: int
    count: int

    @property
    def n_pages(self) -> int:
        return max(1, math.ceil(self.count / self.store.per_page))

    @property
    def nbytes(self) -> int:
        return self.count * self.store.dtype.itemsize

    def chunks(self):
        """Yield the run's records one page at a time."""
        pp = self.store.per_page
        left = self.count
        for p in range(self.start_page, self.start_page + self.n_pages):
            if left <= 0:
                break
            take = min(pp, left)
            yield self.store.cache.get(p)[:take]
            left -= take

    def read_all(self) -> np.ndarray:
        if self.count == 0:
            return np.empty(0, dtype=self.store.dtype)
        return np.concatenate([c.copy() for c in self.chunks()])

    def values_at(self, positions: np.ndarray, dim: int) -> np.ndarray:
        pp = self.store.per_page
        out = np.empty(len(positions))
        for j, pos in enumerate(positions.tolist()):
            page = self.store.cache.get(self.start_page + pos // pp)
            out[j] = page["p"][pos % pp, dim]
        return out

    def writer(self) -> "RunWriter":
        return RunWriter(self)


class RunWriter:
    """Sequential appender; every touched page goes through the cache."""

    def __init__(self, run: ExternalRun):
        self.run = run
        self.pos = 0

    def append(self, recs: np.ndarray) -> None:
        store = self.run.store
        pp = store.per_page
        i = 0
        while i < len(recs):
            page_no = self.run.start_page + self.pos // pp
            off = self.pos % pp
            take = min(pp - off, len(recs) - i)
            if off == 0:
                page = np.zeros(pp, dtype=store.dtype)
                store.cache.put(page_no, page)
            else:
                page = store.cache.get(page_no)
                store.cache.mark_dirty(page_no)
            page[off:off + take] = recs[i:i + take]
            self.pos += take
            i += take
        if self.pos > self.run.count:
            raise CountInfeasible("run writer overflowed its allocation")

    def close(self):
        if self.pos != self.run.count:
            raise CountInfeasible(f"run holds {self.pos} records, allocated {self.run.count}")


# ------------------------------------------------------------ primitives


def _variances(chunks) -> tuple[int, np.ndarray]:
    """Population variance per dimension in one pass (shifted sums)."""
    n = 0
    shift = s1 = s2 = None
    for c in chunks:
        p = c["p"] if c.dtype.names else c
        if shift is None:
            shift = p[0].copy()
            s1 = np.zeros(p.shape[1])
            s2 = np.zeros(p.shape[1])
        d = p - shift
        s1 += d.sum(axis=0)
        s2 += (d * d).sum(axis=0)
        n += len(p)
    if n == 0:
        raise EmptyRun("variance of an empty run")
    mean = s1 / n
    return n, np.maximum(0.0, s2 / n - mean * mean)


def choose_split_dim(run) -> int:
    """Dimension of maximum variance (lowest index on ties)."""
    return int(np.argmax(_variances(_chunks_of(run))[1]))


def _chunks_of(run):
    if isinstance(run, ExternalRun):
        return run.chunks()
    arr = np.asarray(run)
    if arr.dtype.names:
        return [arr]
    return [arr.reshape(len(arr), -1)]


def split_count(n: int, leaf_capacity: int) -> int:
    """Records sent to the left child: the power-of-two multiple of
    ``leaf_capacity`` nearest above the median bucket, clipped so both
    sides keep at least one bucket."""
    if n <= leaf_capacity:
        raise NoSplitNeeded(f"{n} records fit in one leaf of {leaf_capacity}")
    buckets = math.ceil(n / leaf_capacity)
    left = leaf_capacity * (1 << max(0, math.ceil(math.log2(buckets / 2))))
    return min(max(left, leaf_capacity), n - leaf_capacity)


def leaf_count(n: int, leaf_capacity: int) -> int:
    """Leaves produced by recursive split_count on ``n`` records."""
    if n <= leaf_capacity:
        return 1 if n > 0 else 0
    left = split_count(n, leaf_capacity)
    return leaf_count(left, leaf_capacity) + leaf_count(n - left, leaf_capacity)


def sample_pivot(run, dim: int, sample_size: int, rng: np.random.Generator,
                 target_rank: Optional[int] = None) -> float:
    """Order statistic of a uniform sample at the proportionally scaled rank.

    ``target_rank`` is 1-based over the run (default: lower median).
    """
    n = run.count if isinstance(run, ExternalRun) else len(run)
    if n == 0:
        raise EmptyRun("pivot of an empty run")
    if target_rank is None:
        target_rank = (n + 1) // 2
    s = min(sample_size, n)
    if s >= n:
        vals = _column(run, dim)
        r = target_rank
    else:
        pos = np.sort(rng.choice(n, size=s, replace=False))
        vals = run.values_at(pos, dim) if isinstance(run, ExternalRun) else _column(run, dim)[pos]
        r = min(max(math.ceil(target_rank * s / n), 1), s)
    return float(np.partition(vals, r - 1)[r - 1])


def _column(run, dim) -> np.ndarray:
    if isinstance(run, ExternalRun):
        return np.concatenate([c["p"][:, dim] for c in run.chunks()])
    arr = np.asarray(run)
    return (arr["p"] if arr.dtype.names else arr.reshape(len(arr), -1))[:, dim].astype(float)


def _count_three_way(run: ExternalRun, dim: int, pivot: float) -> tuple[int, int]:
    less = equal = 0
    for c in run.chunks():
        v = c["p"][:, dim]
        less += int(np.count_nonzero(v < pivot))
        equal += int(np.count_nonzero(v == pivot))
    return less, equal


def _filter_run(run: ExternalRun, keep: Callable[[np.ndarray], np.ndarray], count: int) -> ExternalRun:
    out = run.store.allocate(count)
    w = out.writer()
    for c in list_chunks(run):
        w.append(c[keep(c["p"])])
    w.close()
    return out


def list_chunks(run: ExternalRun):
    # copies so a cache eviction during writing cannot alias the input page
    for c in run.chunks():
        yield c.copy()


@dataclass
class SelectStats:
    passes: int = 0
    in_memory_size: int = 0


def external_select(run: ExternalRun, dim: int, target_rank: int, params: VamSplitParams,
                    rng: Optional[np.random.Generator] = None,
                    stats: Optional[SelectStats] = None) -> float:
    """Exact value of 1-based rank ``target_rank`` along ``dim``."""
    n = run.count
    if not 1 <= target_rank <= n:
        raise RankOutOfRange(f"rank {target_rank} outside [1, {n}]")
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    stats = stats if stats is not None else SelectStats()
    active, owned, rank = run, False, target_rank
    try:
        while active.nbytes > params.memory_budget:
            stats.passes += 1
            pivot = sample_pivot(active, dim, params.sample_size, rng, rank)
            less, equal = _count_three_way(active, dim, pivot)
            if rank <= less:
                nxt = _filter_run(active, lambda p: p[:, dim] < pivot, less)
            elif rank <= less + equal:
                return pivot
            else:
                greater = active.count - less - equal
                nxt = _filter_run(active, lambda p: p[:, dim] > pivot, greater)
                rank -= less + equal
            if owned:
                active.store.release(active)
            active, owned = nxt, True
        vals = _column(active, dim)
        stats.in_memory_size = len(vals)
        return float(np.partition(vals, rank - 1)[rank - 1])
    finally:
        if owned:
            active.store.release(active)


def _stable_split(p: np.ndarray, dim: int, pivot: float, eq_quota: int, eq_seen: int) -> tuple[np.ndarray, int]:
    v = p[:, dim]
    eq = v == pivot
    eq_rank = np.cumsum(eq) - 1 + eq_seen
    left = (v < pivot) | (eq & (eq_rank < eq_quota))
    return left, eq_seen + int(np.count_nonzero(eq))


def partition_run(run: ExternalRun, dim: int, pivot: float, exact_left_count: int,
                  release_input: bool = True) -> tuple[ExternalRun, ExternalRun]:
    """Split a run into exactly ``exact_left_count`` records ``<= pivot`` and the rest.

    Pivot-equal records fill the left side in stream order until the count
    is met; both outputs keep input order.
    """
    less, equal = _count_three_way(run, dim, pivot)
    if less > exact_left_count or less + equal < exact_left_count:
        raise CountInfeasible(f"{less} records < pivot and {equal} equal cannot yield "
                              f"exactly {exact_left_count} on the left")
    store = run.store
    left_run = store.allocate(exact_left_count)
    right_run = store.allocate(run.count - exact_left_count)
    lw, rw = left_run.writer(), right_run.writer()
    quota, seen = exact_left_count - less, 0
    for c in list_chunks(run):
        mask, seen = _stable_split(c["p"], dim, pivot, quota, seen)
        lw.append(c[mask])
        rw.append(c[~mask])
    lw.close()
    rw.close()
    if release_input:
        store.release(run)
    return left_run, right_run


# ----------------------------------------------------------------- build


@dataclass
class SplitEvent:
    n: int
    dim: int
    left: int
    pivot: float
    variances: np.ndarray
    io_reads: int
    io_writes: int
    external: bool

    def line(self) -> str:
        return (f"split dim={self.dim} n={self.n} left={self.left} pivot={self.pivot!r} "
                f"io_reads={self.io_reads} io_writes={self.io_writes}")


@dataclass
class BuildReport:
    splits: list = field(default_factory=list)
    leaves: int = 0
    records: int = 0
    select_passes: int = 0
    scratch_reads: int = 0
    scratch_writes: int = 0

    def lines(self) -> list[str]:
        return [e.line() for e in self.splits]


class VamSplitBuilder:
    def __init__(self, tree: RTree, params: VamSplitParams, runs: RunStore, report: BuildReport,
                 on_split: Optional[Callable[[SplitEvent], None]] = None):
        self.tree = tree
        self.params = params
        self.runs = runs
        self.report = report
        self.rng = np.random.default_rng(params.seed)
        self.cap = params.leaf_capacity or tree.M
        if self.cap > tree.M:
            raise BadParams(f"leaf_capacity {self.cap} exceeds page fanout {tree.M}")
        self.leaves: list[tuple[int, np.ndarray, np.ndarray]] = []
        self.on_split = on_split

    def _emit_leaf(self, recs: np.ndarray):
        pts = recs["p"]
        node = self.tree.new_node(True, pts, pts, recs["id"])
        self.leaves.append((node.page_id, pts.min(axis=0), pts.max(axis=0)))
        self.report.leaves += 1
        self.report.records += len(recs)

    def _event(self, n, dim, left, pivot, variances, external):
        ev = SplitEvent(n, dim, left, pivot, variances, self.runs.io.reads, self.runs.io.writes, external)
        self.report.splits.append(ev)
        log.debug(ev.line())
        if self.on_split:
            self.on_split(ev)

    def build_run(self, run: ExternalRun):
        if run.nbytes <= self.params.memory_budget:
            recs = run.read_all()
            self.runs.release(run)
            self.build_memory(recs)
            return
        n = run.count
        if n <= self.cap:
            self._emit_leaf(run.read_all())
            self.runs.release(run)
            return
        _, var = _variances(run.chunks())
        dim = int(np.argmax(var))
        left = split_count(n, self.cap)
        stats = SelectStats()
        pivot = external_select(run, dim, left, self.params, self.rng, stats)
        self.report.select_passes += stats.passes
        lrun, rrun = partition_run(run, dim, pivot, left)
        self._event(n, dim, left, pivot, var, True)
        self.build_run(lrun)
        self.build_run(rrun)

    def build_memory(self, recs: np.ndarray):
        n = len(recs)
        if n <= self.cap:
            self._emit_leaf(recs)
            return
        _, var = _variances([recs])
        dim = int(np.argmax(var))
        left = split_count(n, self.cap)
        v = recs["p"][:, dim]
        pivot = float(np.partition(v, left - 1)[left - 1])
        less = int(np.count_nonzero(v < pivot))
        mask, _ = _stable_split(recs["p"], dim, pivot, left - less, 0)
        self._event(n, dim, left, pivot, var, False)
        self.build_memory(recs[mask])
        self.build_memory(recs[~mask])

    def pack(self):
        """Group consecutive nodes M at a time into parent levels."""
        tree = self.tree
        level = self.leaves
        height = 1
        fan = self.params.internal_fanout or tree.M
        fan = min(fan, tree.M)
        m_int = min(default_min_fill(fan), fan // 2) or 1
        while len(level) > 1:
            groups = [level[i:i + fan] for i in range(0, len(level), fan)]
            if len(groups) > 1 and len(groups[-1]) < m_int:
                need = m_int - len(groups[-1])
                groups[-1] = groups[-2][-need:] + groups[-1]
                groups[-2] = groups[-2][:-need]
            nxt = []
            for g in groups:
                lows = np.stack([lo for _, lo, _ in g])
                highs = np.stack([hi for _, _, hi in g])
                node = tree.new_node(False, lows, highs, [pid for pid, _, _ in g])
                nxt.append((node.page_id, lows.min(axis=0), highs.max(axis=0)))
            level = nxt
            height += 1
        tree.root = level[0][0]
        tree.height = height


def vamsplit_build(points, out_path, params: Optional[VamSplitParams] = None,
                   ids: Optional[np.ndarray] = None, meta: Optional[dict] = None,
                   scratch_dir=None, on_split: Optional[Callable[[SplitEvent], None]] = None,
                   rtree_cache_pages: int = 64) -> tuple[RTree, BuildReport]:
    """Bulk-load an R-tree from an (n, k) point array into ``out_path``.

    Bulk-built trees record min fill 1 in the header: leaf occupancy is set by
    ``leaf_capacity`` (every leaf full except possibly one), not by the 40%
    rule of dynamic insertion.
    """
    params = params or VamSplitParams()
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n, k = pts.shape
    if n == 0:
        raise EmptyRun("cannot bulk-load an empty dataset")
    ids = np.arange(n, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
    tree = RTree.create(out_path, k, params.page_size, cache_pages=rtree_cache_pages,
                        min_fill=1, meta=meta, empty_root=False)
    report = BuildReport()
    fd, scratch = tempfile.mkstemp(prefix="vamsplit-", suffix=".runs", dir=scratch_dir)
    os.close(fd)
    runs = RunStore(scratch, k, params.page_size, params.cache_pages)
    try:
        builder = VamSplitBuilder(tree, params, runs, report, on_split)
        recs = np.empty(n, dtype=runs.dtype)
        recs["p"] = pts
        recs["id"] = ids
        if recs.nbytes <= params.memory_budget:
            builder.build_memory(recs)
        else:
            builder.build_run(runs.from_array(recs))
        builder.pack()
        tree.count = n
        report.scratch_reads, report.scratch_writes = runs.io.snapshot()
    finally:
        runs.close()
        os.unlink(scratch)
    tree.flush()
    return tree, report

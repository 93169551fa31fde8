"""Disk-paged R-tree: page layout, queries, spatial join and Guttman insertion.

``.rt`` layout (little-endian, pages of ``page_size`` bytes):

    page 0 : magic b"SKYR" | version u16 | k u16 | M u16 | m u16 | root u64
             | height u16 | count u64 | meta_len u16 | meta JSON
    page i : is_leaf u8 | reserved u8 | count u16 | count entries of
             (low f64 * k, high f64 * k, child page id or record id u64)
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..errors import BadParams, CorruptHeader, DimensionMismatch, EmptyTree
from ..paging import IoCounter, PageCache, PageFile
from .mbb import MBB, min_dist_sq_many, pair_dist_sq

MAGIC = b"SKYR"
VERSION = 1
HEADER = struct.Struct("<4sHHHHQHQ")
META_LEN = struct.Struct("<H")
NODE_HEADER = struct.Struct("<BBH")
DEFAULT_PAGE_SIZE = 4096
DEFAULT_CACHE_PAGES = 64


def entry_dtype(k: int) -> np.dtype:
    return np.dtype([("low", "<f8", (k,)), ("high", "<f8", (k,)), ("id", "<u8")])


def fanout(page_size: int, k: int) -> int:
    return (page_size - NODE_HEADER.size) // entry_dtype(k).itemsize


def default_min_fill(M: int) -> int:
    return max(1, math.ceil(0.4 * M))


@dataclass
class Node:
    page_id: int
    is_leaf: bool
    lows: np.ndarray
    highs: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return len(self.ids)

    def mbb(self) -> MBB:
        return MBB(self.lows.min(axis=0), self.highs.max(axis=0))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lows.min(axis=0), self.highs.max(axis=0)


@dataclass
class AuditReport:
    height: int
    pages: int
    leaves: int
    records: int
    underfull: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


class RTree:
    """An R-tree stored in a page file; all page access goes through an
    LRU cache whose physical reads/writes are tallied in ``io``."""

    def __init__(self, pagefile: PageFile, k: int, M: int, m: int, root: int, height: int,
                 count: int, meta: dict, cache_pages: int):
        self.file = pagefile
        self.page_size = pagefile.page_size
        self.k = k
        self.M = M
        self.m = m
        self.root = root
        self.height = height
        self.count = count
        self.meta = meta
        self.io: IoCounter = pagefile.counter
        self._dtype = entry_dtype(k)
        self._next_page = max(pagefile.n_pages, 1)
        self.cache = PageCache(cache_pages, self._load, self._store)

    # ---------------------------------------------------------- lifecycle

    @classmethod
    def create(cls, path, k: int, page_size: int = DEFAULT_PAGE_SIZE,
               cache_pages: int = DEFAULT_CACHE_PAGES, min_fill: Optional[int] = None,
               meta: Optional[dict] = None, empty_root: bool = True) -> "RTree":
        if k < 1:
            raise DimensionMismatch("k must be >= 1")
        M = fanout(page_size, k)
        if M < 2:
            raise BadParams(f"page_size {page_size} holds fewer than 2 entries of dimension {k}")
        m = default_min_fill(M) if min_fill is None else min_fill
        if not 1 <= m <= M // 2 + (M % 2):
            raise BadParams(f"min fill {m} incompatible with fanout {M}")
        pf = PageFile(path, page_size, create=True)
        tree = cls(pf, k, M, m, 0, 0, 0, dict(meta or {}), cache_pages)
        tree._next_page = 1
        if empty_root:
            root = tree.new_node(True)
            tree.root, tree.height = root.page_id, 1
        return tree

    @classmethod
    def open(cls, path, cache_pages: int = DEFAULT_CACHE_PAGES) -> "RTree":
        with open(path, "rb") as fh:
            head = fh.read(HEADER.size + META_LEN.size)
            if len(head) < HEADER.size + META_LEN.size:
                raise CorruptHeader(f"{path}: truncated header")
            magic, version, k, M, m, root, height, count = HEADER.unpack_from(head)
            if magic != MAGIC or version != VERSION:
                raise CorruptHeader(f"{path}: bad magic or version")
            (mlen,) = META_LEN.unpack_from(head, HEADER.size)
            try:
                meta = json.loads(fh.read(mlen).decode("utf-8")) if mlen else {}
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise CorruptHeader(f"{path}: unreadable metadata") from None
        page_size = NODE_HEADER.size + M * entry_dtype(k).itemsize
        # M is a floor, so page_size is recovered from the metadata when present
        page_size = meta.get("page_size", page_size)
        pf = PageFile(path, page_size)
        if pf.n_pages * page_size != _file_size(path):
            pf.close()
            raise CorruptHeader(f"{path}: size is not a whole number of pages")
        pf.counter.reset()
        return cls(pf, k, M, m, root, height, count, meta, cache_pages)

    def header_bytes(self) -> bytes:
        meta = dict(self.meta)
        meta["page_size"] = self.page_size
        mj = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        head = HEADER.pack(MAGIC, VERSION, self.k, self.M, self.m, self.root, self.height, self.count) \
            + META_LEN.pack(len(mj)) + mj
        if len(head) > self.page_size:
            raise BadParams("index metadata does not fit in the header page")
        return head + bytes(self.page_size - len(head))

    def flush(self) -> None:
        self.cache.flush()
        self.file.write(0, self.header_bytes())

    def close(self) -> None:
        if not self.file._fh.closed:
            self.flush()
            self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def reset_io(self, drop_cache: bool = True) -> None:
        """Zero the counters; with ``drop_cache`` the next query starts cold."""
        if drop_cache:
            self.cache.clear()
        self.io.reset()

    # ------------------------------------------------------------ pages

    def _load(self, page_no: int) -> Node:
        raw = self.file.read(page_no)
        is_leaf, _, n = NODE_HEADER.unpack_from(raw)
        if n > self.M:
            raise CorruptHeader(f"page {page_no}: {n} entries exceeds fanout {self.M}")
        ents = np.frombuffer(bytes(raw), dtype=self._dtype, count=n, offset=NODE_HEADER.size)
        return Node(page_no, bool(is_leaf), ents["low"].copy(), ents["high"].copy(), ents["id"].copy())

    def _store(self, page_no: int, node: Node) -> None:
        ents = np.empty(len(node.ids), dtype=self._dtype)
        ents["low"] = node.lows
        ents["high"] = node.highs
        ents["id"] = node.ids
        body = NODE_HEADER.pack(int(node.is_leaf), 0, len(node.ids)) + ents.tobytes()
        self.file.write(page_no, body + bytes(self.page_size - len(body)))

    def node(self, page_id: int) -> Node:
        return self.cache.get(page_id)

    def put(self, node: Node) -> None:
        if len(node.ids) > self.M:
            raise BadParams(f"node with {len(node.ids)} entries exceeds fanout {self.M}")
        self.cache.put(node.page_id, node)

    def allocate(self) -> int:
        pid = self._next_page
        self._next_page += 1
        return pid

    def new_node(self, is_leaf: bool, lows=None, highs=None, ids=None) -> Node:
        k = self.k
        node = Node(self.allocate(), is_leaf,
                    np.empty((0, k)) if lows is None else np.asarray(lows, dtype=float).reshape(-1, k),
                    np.empty((0, k)) if highs is None else np.asarray(highs, dtype=float).reshape(-1, k),
                    np.empty(0, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64))
        self.put(node)
        return node

    @property
    def n_pages(self) -> int:
        return self._next_page - 1

    # ----------------------------------------------------------- queries

    def _vec(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.shape[0] != self.k:
            raise DimensionMismatch(f"query has {p.shape[0]} dims, tree has {self.k}")
        return p

    def point_query(self, p) -> list[int]:
        p = self._vec(p)
        return self._search(lambda lo, hi: np.all((lo <= p) & (p <= hi), axis=1))

    def range_query(self, window) -> list[int]:
        if not isinstance(window, MBB):
            window = MBB(*window)
        if window.k != self.k:
            raise DimensionMismatch(f"window has {window.k} dims, tree has {self.k}")
        wl, wh = np.array(window.low), np.array(window.high)
        return self._search(lambda lo, hi: np.all((lo <= wh) & (wl <= hi), axis=1))

    def _search(self, pred) -> list[int]:
        if self.count == 0:
            self.node(self.root)
            return []
        out = []
        stack = [self.root]
        while stack:
            node = self.node(stack.pop())
            if not len(node):
                continue
            hit = node.ids[pred(node.lows, node.highs)]
            if node.is_leaf:
                out.extend(int(i) for i in hit)
            else:
                stack.extend(int(i) for i in hit[::-1])
        return sorted(out)

    def knn(self, q, k_neighbors: int) -> list[tuple[int, float]]:
        """Best-first k nearest neighbours by box distance; ties by record id."""
        if k_neighbors < 1:
            raise BadParams("k_neighbors must be >= 1")
        if self.count == 0:
            raise EmptyTree("knn on an empty tree")
        q = self._vec(q)
        # (dist, kind, id): pages (kind 0) pop before records at equal distance
        heap = [(0.0, 0, self.root)]
        out: list[tuple[int, float]] = []
        kth = math.inf
        best: list = []  # max-heap (-dist, -id) of current k best records
        while heap:
            dist, kind, ident = heapq.heappop(heap)
            if len(best) == k_neighbors and dist > kth:
                break
            if kind == 1:
                out.append((ident, dist))
                if len(out) == k_neighbors:
                    break
                continue
            node = self.node(ident)
            if not len(node):
                continue
            ds = np.sqrt(min_dist_sq_many(node.lows, node.highs, q))
            if node.is_leaf:
                for i, d in zip(node.ids.tolist(), ds.tolist()):
                    item = (-d, -i)
                    if len(best) < k_neighbors:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
                    else:
                        continue
                    heapq.heappush(heap, (d, 1, i))
                if len(best) == k_neighbors:
                    kth = -best[0][0]
            else:
                for i, d in zip(node.ids.tolist(), ds.tolist()):
                    if d <= kth:
                        heapq.heappush(heap, (d, 0, i))
        return out

    def spatial_join(self, other: "RTree", epsilon: float) -> list[tuple[int, int]]:
        """All (id_self, id_other) pairs whose boxes lie within ``epsilon``."""
        if other.k != self.k:
            raise DimensionMismatch(f"join of {self.k}-d and {other.k}-d trees")
        if epsilon < 0:
            raise BadParams("epsilon must be >= 0")
        if self.count == 0 or other.count == 0:
            return []
        eps2 = float(epsilon) ** 2
        out: list[tuple[int, int]] = []
        stack = [(self.root, other.root)]
        while stack:
            pa, pb = stack.pop()
            a, b = self.node(pa), other.node(pb)
            if not len(a) or not len(b):
                continue
            ia, ib = np.nonzero(pair_dist_sq(a.lows, a.highs, b.lows, b.highs) <= eps2)
            if a.is_leaf and b.is_leaf:
                out.extend(zip(a.ids[ia].tolist(), b.ids[ib].tolist()))
            elif a.is_leaf:
                stack.extend((pa, int(c)) for c in np.unique(b.ids[ib])[::-1])
            elif b.is_leaf:
                stack.extend((int(c), pb) for c in np.unique(a.ids[ia])[::-1])
            else:
                stack.extend((int(x), int(y)) for x, y in zip(a.ids[ia][::-1], b.ids[ib][::-1]))
        return sorted(out)

    # ----------------------------------------------------------- insert

    def insert(self, mbb, record_id: int) -> None:
        if not isinstance(mbb, MBB):
            mbb = MBB.point(mbb)
        if mbb.k != self.k:
            raise DimensionMismatch(f"box has {mbb.k} dims, tree has {self.k}")
        lo, hi = np.array(mbb.low), np.array(mbb.high)
        path: list[tuple[Node, int]] = []
        node = self.node(self.root)
        while not node.is_leaf:
            idx = _choose_subtree(node.lows, node.highs, lo, hi)
            path.append((node, idx))
            node = self.node(int(node.ids[idx]))
        _append_entry(node, lo, hi, record_id)
        self.count += 1

        split = self._maybe_split(node)
        self.put(node)
        while path:
            parent, idx = path.pop()
            nl, nh = node.bounds()
            parent.lows[idx], parent.highs[idx] = nl, nh
            if split is not None:
                sl, sh = split.bounds()
                _append_entry(parent, sl, sh, split.page_id)
            node = parent
            split = self._maybe_split(node)
            self.put(node)
        if split is not None:
            root = self.new_node(False)
            for child in (node, split):
                cl, ch = child.bounds()
                _append_entry(root, cl, ch, child.page_id)
            self.put(root)
            self.root = root.page_id
            self.height += 1

    def _maybe_split(self, node: Node) -> Optional[Node]:
        if len(node) <= self.M:
            return None
        g1, g2 = quadratic_split(node.lows, node.highs, self.m)
        other = Node(self.allocate(), node.is_leaf, node.lows[g2], node.highs[g2], node.ids[g2])
        node.lows, node.highs, node.ids = node.lows[g1], node.highs[g1], node.ids[g1]
        self.put(other)
        return other

    # ----------------------------------------------------------- audit

    def iter_leaves(self) -> Iterator[Node]:
        stack = [self.root]
        while stack:
            node = self.node(stack.pop())
            if node.is_leaf:
                yield node
            else:
                stack.extend(int(i) for i in node.ids[::-1])

    def records(self) -> list[tuple[int, np.ndarray, np.ndarray]]:
        return [(int(i), lo, hi) for leaf in self.iter_leaves()
                for i, lo, hi in zip(leaf.ids, leaf.lows, leaf.highs)]

    def audit(self) -> AuditReport:
        """Full traversal checking MBB exactness, balance, occupancy and count."""
        rep = AuditReport(self.height, 0, 0, 0)
        stack = [(self.root, 1, None)]
        leaf_depths = set()
        while stack:
            pid, depth, expect = stack.pop()
            node = self.node(pid)
            rep.pages += 1
            if expect is not None:
                if not len(node):
                    rep.errors.append(f"page {pid}: empty non-root page")
                else:
                    lo, hi = node.bounds()
                    if not (np.array_equal(lo, expect[0]) and np.array_equal(hi, expect[1])):
                        rep.errors.append(f"page {pid}: parent MBB is not the exact union")
                if len(node) < self.m:
                    rep.underfull.append(pid)
            if len(node) > self.M:
                rep.errors.append(f"page {pid}: {len(node)} entries > M={self.M}")
            if node.is_leaf:
                rep.leaves += 1
                rep.records += len(node)
                leaf_depths.add(depth)
            else:
                if pid == self.root and len(node) < 2:
                    rep.errors.append("internal root with fewer than 2 entries")
                for i, lo, hi in zip(node.ids, node.lows, node.highs):
                    stack.append((int(i), depth + 1, (lo, hi)))
        if len(leaf_depths) > 1:
            rep.errors.append(f"leaves at depths {sorted(leaf_depths)}")
        elif leaf_depths and leaf_depths != {self.height}:
            rep.errors.append(f"leaf depth {leaf_depths} != height {self.height}")
        if rep.records != self.count:
            rep.errors.append(f"{rep.records} leaf entries, header count {self.count}")
        if rep.underfull:
            rep.errors.append(f"{len(rep.underfull)} non-root pages below min fill {self.m}")
        return rep


def _file_size(path) -> int:
    import os
    return os.path.getsize(path)


def _append_entry(node: Node, lo, hi, ident) -> None:
    node.lows = np.vstack([node.lows, np.asarray(lo, dtype=float)[None, :]])
    node.highs = np.vstack([node.highs, np.asarray(hi, dtype=float)[None, :]])
    node.ids = np.append(node.ids, np.uint64(ident))


def _areas(lows, highs) -> np.ndarray:
    return np.prod(highs - lows, axis=-1)


def _choose_subtree(lows, highs, lo, hi) -> int:
    area = _areas(lows, highs)
    grown = _areas(np.minimum(lows, lo), np.maximum(highs, hi))
    enlarge = grown - area
    # least enlargement, then smallest area, then lowest index
    order = np.lexsort((np.arange(len(area)), area, enlarge))
    return int(order[0])


def quadratic_split(lows: np.ndarray, highs: np.ndarray, m: int) -> tuple[list[int], list[int]]:
    """Guttman's quadratic split; both groups receive at least ``m`` entries."""
    n = len(lows)
    area = _areas(lows, highs)
    ul = np.minimum(lows[:, None, :], lows[None, :, :])
    uh = np.maximum(highs[:, None, :], highs[None, :, :])
    waste = _areas(ul, uh) - area[:, None] - area[None, :]
    np.fill_diagonal(waste, -np.inf)
    s1, s2 = np.unravel_index(int(np.argmax(waste)), waste.shape)
    groups = ([int(s1)], [int(s2)])
    bl = [lows[s1].copy(), lows[s2].copy()]
    bh = [highs[s1].copy(), highs[s2].copy()]
    rest = [i for i in range(n) if i not in (s1, s2)]
    while rest:
        for g in (0, 1):
            if len(groups[g]) + len(rest) == m:
                groups[g].extend(rest)
                rest = []
                break
        if not rest:
            break
        r = np.array(rest)
        a = [_areas(bl[g], bh[g]) for g in (0, 1)]
        d = [_areas(np.minimum(lows[r], bl[g]), np.maximum(highs[r], bh[g])) - a[g] for g in (0, 1)]
        pick = int(np.argmax(np.abs(d[0] - d[1])))
        i = rest.pop(pick)
        d0, d1 = float(d[0][pick]), float(d[1][pick])
        if d0 != d1:
            g = 0 if d0 < d1 else 1
        elif a[0] != a[1]:
            g = 0 if a[0] < a[1] else 1
        else:
            g = 0 if len(groups[0]) <= len(groups[1]) else 1
        groups[g].append(i)
        bl[g] = np.minimum(bl[g], lows[i])
        bh[g] = np.maximum(bh[g], highs[i])
    return sorted(groups[0]), sorted(groups[1])

"""Main-memory KD-tree with threshold-based leaf termination.

Points on the splitting hyperplane go left (``<=``); the split value is the
lower median of the node's coordinates along the split dimension.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BadParams, BadWindow, DimensionMismatch, EmptyTree

CYCLE_MEDIAN = "cycle_median"
MAX_VARIANCE_MEDIAN = "max_variance_median"


@dataclass(frozen=True)
class KdBuildParams:
    leaf_point_threshold: float = 16
    leaf_extent_threshold: float = 0.0
    splitting_rule: str = CYCLE_MEDIAN

    def __post_init__(self):
        pt, ext = self.leaf_point_threshold, self.leaf_extent_threshold
        if not ((0 < pt < math.inf) or (0 < ext < math.inf)):
            raise BadParams("at least one KD-tree leaf threshold must be finite and positive")
        if self.splitting_rule not in (CYCLE_MEDIAN, MAX_VARIANCE_MEDIAN):
            raise BadParams(f"unknown splitting rule {self.splitting_rule!r}")


@dataclass
class KdLeaf:
    ids: list = field(default_factory=list)


@dataclass
class KdInternal:
    split_dim: int
    split_value: float
    left: object
    right: object


class KDTree:
    """Points are identified by insertion order (0, 1, 2, ...)."""

    def __init__(self, k: int, params: Optional[KdBuildParams] = None):
        if k < 1:
            raise DimensionMismatch("dimensionality must be >= 1")
        self.k = k
        self.params = params or KdBuildParams()
        self._data = np.empty((16, k))
        self.size = 0
        self.root: object = KdLeaf()
        self.last_path_length = 0

    # ---------------------------------------------------------------- build

    @classmethod
    def build(cls, points, params: Optional[KdBuildParams] = None, k: Optional[int] = None) -> "KDTree":
        pts = _as_points(points, k)
        tree = cls(pts.shape[1], params)
        tree._append(pts)
        if len(pts):
            tree.root = tree._build(np.arange(len(pts)), 0)
        return tree

    @property
    def points(self) -> np.ndarray:
        return self._data[:self.size]

    def _append(self, pts: np.ndarray):
        need = self.size + len(pts)
        if need > len(self._data):
            grown = np.empty((max(need, 2 * len(self._data)), self.k))
            grown[:self.size] = self._data[:self.size]
            self._data = grown
        self._data[self.size:need] = pts
        self.size = need

    def _is_leaf_set(self, ids: np.ndarray) -> bool:
        if len(ids) <= self.params.leaf_point_threshold:
            return True
        pts = self._data[ids]
        extent = float((pts.max(axis=0) - pts.min(axis=0)).max())
        # identical points can never be separated
        return extent == 0.0 or extent < self.params.leaf_extent_threshold

    def _split_dim(self, ids: np.ndarray, depth: int) -> int:
        pts = self._data[ids]
        if self.params.splitting_rule == MAX_VARIANCE_MEDIAN:
            return int(np.argmax(pts.var(axis=0)))
        # cycle, skipping axes along which every point is equal
        spread = pts.max(axis=0) > pts.min(axis=0)
        for step in range(self.k):
            d = (depth + step) % self.k
            if spread[d]:
                return d
        return depth % self.k

    def _build(self, ids: np.ndarray, depth: int):
        if self._is_leaf_set(ids):
            return KdLeaf(sorted(ids.tolist()))
        dim = self._split_dim(ids, depth)
        vals = self._data[ids, dim]
        mid = (len(vals) - 1) // 2
        split_value = float(np.partition(vals, mid)[mid])
        if split_value == vals.max():
            # ties at the top would send everything left; split just below them
            split_value = float(vals[vals < split_value].max())
        mask = vals <= split_value
        return KdInternal(dim, split_value,
                          self._build(ids[mask], depth + 1),
                          self._build(ids[~mask], depth + 1))

    # --------------------------------------------------------------- insert

    def insert(self, point) -> int:
        """Insert a point; returns its id. ``last_path_length`` records the
        number of nodes visited on the descent."""
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.shape[0] != self.k:
            raise DimensionMismatch(f"point has {p.shape[0]} dims, tree has {self.k}")
        pid = self.size
        self._append(p[None, :])
        parent, side, node, depth, path = None, None, self.root, 0, 1
        while isinstance(node, KdInternal):
            parent = node
            if p[node.split_dim] <= node.split_value:
                side, node = "left", node.left
            else:
                side, node = "right", node.right
            depth += 1
            path += 1
        node.ids.append(pid)
        self.last_path_length = path
        ids = np.array(node.ids)
        if not self._is_leaf_set(ids):
            new = self._build(ids, depth)
            if parent is None:
                self.root = new
            else:
                setattr(parent, side, new)
        return pid

    # -------------------------------------------------------------- queries

    def range_query(self, low, high) -> list[int]:
        low = np.asarray(low, dtype=float).reshape(-1)
        high = np.asarray(high, dtype=float).reshape(-1)
        if low.shape[0] != self.k or high.shape[0] != self.k:
            raise DimensionMismatch("window dimensionality differs from tree")
        if np.any(low > high):
            raise BadWindow("window low exceeds high")
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, KdLeaf):
                if node.ids:
                    ids = np.array(node.ids)
                    pts = self._data[ids]
                    inside = np.all((pts >= low) & (pts <= high), axis=1)
                    out.extend(ids[inside].tolist())
                continue
            d = node.split_dim
            if low[d] <= node.split_value:
                stack.append(node.left)
            if high[d] > node.split_value:
                stack.append(node.right)
        return sorted(out)

    def knn(self, q, k_neighbors: int) -> list[tuple[int, float]]:
        """Nearest ``k_neighbors`` ids with Euclidean distance, ascending;
        equal distances ordered by id."""
        if k_neighbors < 1:
            raise BadParams("k_neighbors must be >= 1")
        if self.size == 0:
            raise EmptyTree("knn on an empty tree")
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.k:
            raise DimensionMismatch("query dimensionality differs from tree")
        best: list = []  # max-heap of (-dist, -id)
        lo = np.full(self.k, -np.inf)
        hi = np.full(self.k, np.inf)
        heap = [(0.0, 0, self.root, lo, hi)]
        counter = 1
        while heap:
            dist, _, node, lo, hi = heapq.heappop(heap)
            if len(best) == k_neighbors and dist > -best[0][0]:
                break
            if isinstance(node, KdLeaf):
                if not node.ids:
                    continue
                ids = np.array(node.ids)
                ds = np.sqrt(((self._data[ids] - q) ** 2).sum(axis=1))
                for i, dd in zip(ids.tolist(), ds.tolist()):
                    item = (-dd, -i)
                    if len(best) < k_neighbors:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
                continue
            d = node.split_dim
            llo, lhi = lo, hi.copy()
            lhi[d] = node.split_value
            rlo, rhi = lo.copy(), hi
            rlo[d] = node.split_value
            for clo, chi, child in ((llo, lhi, node.left), (rlo, rhi, node.right)):
                cd = _box_dist(clo, chi, q)
                heapq.heappush(heap, (cd, counter, child, clo, chi))
                counter += 1
        return sorted(((-ni, -nd) for nd, ni in best), key=lambda t: (t[1], t[0]))

    # ------------------------------------------------------------ inspection

    def leaves(self) -> list[tuple[int, KdLeaf]]:
        """(depth, leaf) pairs in left-to-right order."""
        out = []
        stack = [(0, self.root)]
        while stack:
            depth, node = stack.pop()
            if isinstance(node, KdLeaf):
                out.append((depth, node))
            else:
                stack.append((depth + 1, node.right))
                stack.append((depth + 1, node.left))
        return out

    def height(self) -> int:
        return max(d for d, _ in self.leaves())

    def check_invariants(self) -> None:
        """Raise AssertionError if a stored point violates its ancestors' splits."""
        seen = []

        def walk(node, depth, constraints):
            if isinstance(node, KdLeaf):
                for i in node.ids:
                    p = self._data[i]
                    for dim, val, left in constraints:
                        assert (p[dim] <= val) if left else (p[dim] > val), (i, dim, val, left)
                    seen.append(i)
                return
            assert not (isinstance(node.left, KdLeaf) and not node.left.ids and
                        isinstance(node.right, KdLeaf) and not node.right.ids)
            walk(node.left, depth + 1, constraints + [(node.split_dim, node.split_value, True)])
            walk(node.right, depth + 1, constraints + [(node.split_dim, node.split_value, False)])

        walk(self.root, 0, [])
        assert sorted(seen) == list(range(self.size))


def _box_dist(lo, hi, q) -> float:
    gap = np.maximum(0.0, np.maximum(lo - q, q - hi))
    return float(math.sqrt(float((gap ** 2).sum())))


def _as_points(points, k: Optional[int] = None) -> np.ndarray:
    if isinstance(points, np.ndarray):
        pts = points.astype(float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if (k in (None, 1)) else pts.reshape(-1, k)
    else:
        seq = list(points)
        if not seq:
            return np.empty((0, k or 1))
        dims = {len(np.atleast_1d(p)) for p in seq}
        if len(dims) != 1:
            raise DimensionMismatch(f"points have mixed dimensionality {sorted(dims)}")
        pts = np.array([np.atleast_1d(p) for p in seq], dtype=float)
    if k is not None and pts.shape[1] != k:
        raise DimensionMismatch(f"points have {pts.shape[1]} dims, expected {k}")
    if pts.shape[1] < 1:
        raise DimensionMismatch("points must have at least one dimension")
    return pts


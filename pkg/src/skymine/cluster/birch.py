"""BIRCH: clustering features, the CF-tree and a weighted agglomerative global phase."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import BadParams, DimensionMismatch, TooFewSubclusters


@dataclass
class ClusteringFeature:
    """(n, linear sum, sum of squared norms) of a group of points."""

    n: int
    ls: np.ndarray
    ss: float

    @classmethod
    def of_points(cls, points) -> "ClusteringFeature":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(len(pts), pts.sum(axis=0), float((pts * pts).sum()))

    @classmethod
    def of_point(cls, p) -> "ClusteringFeature":
        p = np.asarray(p, dtype=float).reshape(-1)
        return cls(1, p.copy(), float(p @ p))

    def __add__(self, other: "ClusteringFeature") -> "ClusteringFeature":
        return cf_merge(self, other)

    def centroid(self) -> np.ndarray:
        return cf_centroid(self)

    def radius(self) -> float:
        return cf_radius(self)


def cf_merge(a: ClusteringFeature, b: ClusteringFeature) -> ClusteringFeature:
    if a.ls.shape != b.ls.shape:
        raise DimensionMismatch(f"CF dimensionality {a.ls.shape} vs {b.ls.shape}")
    return ClusteringFeature(a.n + b.n, a.ls + b.ls, a.ss + b.ss)


def cf_centroid(cf: ClusteringFeature) -> np.ndarray:
    if cf.n <= 0:
        raise BadParams("centroid of an empty clustering feature")
    return cf.ls / cf.n


def cf_radius(cf: ClusteringFeature) -> float:
    """Root-mean-square distance of the members from their centroid."""
    if cf.n <= 0:
        raise BadParams("radius of an empty clustering feature")
    c = cf.ls / cf.n
    return math.sqrt(max(0.0, cf.ss / cf.n - float(c @ c)))


class _Node:
    __slots__ = ("leaf", "n", "ls", "ss", "children", "size")

    def __init__(self, leaf: bool, k: int, cap: int):
        self.leaf = leaf
        self.n = np.zeros(cap + 1)
        self.ls = np.zeros((cap + 1, k))
        self.ss = np.zeros(cap + 1)
        self.children: list = []
        self.size = 0

    def cf(self, i: int) -> ClusteringFeature:
        return ClusteringFeature(int(self.n[i]), self.ls[i].copy(), float(self.ss[i]))

    def total(self, k: int) -> ClusteringFeature:
        s = self.size
        return ClusteringFeature(int(self.n[:s].sum()), self.ls[:s].sum(axis=0), float(self.ss[:s].sum()))

    def set_entry(self, i, n, ls, ss, child=None):
        self.n[i], self.ls[i], self.ss[i] = n, ls, ss
        if not self.leaf:
            if i < len(self.children):
                self.children[i] = child
            else:
                self.children.append(child)


class CfTree:
    """CF-tree with branching factor ``B`` (entries per node) and absorption
    threshold ``T`` on the post-merge radius of a leaf entry."""

    def __init__(self, k: int, threshold: float, branching: int = 50):
        if branching < 2:
            raise BadParams("branching factor must be >= 2")
        if threshold < 0:
            raise BadParams("threshold must be >= 0")
        self.k = k
        self.T = float(threshold)
        self.B = branching
        self.root = _Node(True, k, branching)
        self.height = 1
        self.n_points = 0
        self.distance_evals = 0

    # ------------------------------------------------------------- insert

    def insert(self, point) -> None:
        x = np.asarray(point, dtype=float).reshape(-1)
        if x.shape[0] != self.k:
            raise DimensionMismatch(f"point has {x.shape[0]} dims, tree has {self.k}")
        xx = float(x @ x)
        path = []
        node = self.root
        while not node.leaf:
            i = self._nearest(node, x)
            node.n[i] += 1
            node.ls[i] += x
            node.ss[i] += xx
            path.append((node, i))
            node = node.children[i]
        self._insert_leaf(node, x, xx)
        self.n_points += 1

        split = self._split(node) if node.size > self.B else None
        while path:
            parent, i = path.pop()
            if split is None:
                break
            a, b = split
            ta, tb = a.total(self.k), b.total(self.k)
            parent.set_entry(i, ta.n, ta.ls, ta.ss, a)
            parent.set_entry(parent.size, tb.n, tb.ls, tb.ss, b)
            parent.size += 1
            split = self._split(parent) if parent.size > self.B else None
        if split is not None:
            root = _Node(False, self.k, self.B)
            for j, child in enumerate(split):
                t = child.total(self.k)
                root.set_entry(j, t.n, t.ls, t.ss, child)
            root.size = 2
            self.root = root
            self.height += 1

    def _nearest(self, node: _Node, x: np.ndarray) -> int:
        s = node.size
        c = node.ls[:s] / node.n[:s, None]
        d = ((c - x) ** 2).sum(axis=1)
        self.distance_evals += s
        return int(np.argmin(d))

    def _insert_leaf(self, leaf: _Node, x: np.ndarray, xx: float):
        if leaf.size:
            i = self._nearest(leaf, x)
            n = leaf.n[i] + 1
            ls = leaf.ls[i] + x
            ss = leaf.ss[i] + xx
            c = ls / n
            r2 = ss / n - float(c @ c)
            if r2 <= self.T * self.T:
                leaf.n[i], leaf.ls[i], leaf.ss[i] = n, ls, ss
                return
        j = leaf.size
        leaf.n[j], leaf.ls[j], leaf.ss[j] = 1, x, xx
        leaf.size += 1

    def _split(self, node: _Node) -> tuple[_Node, _Node]:
        """Split an overfull node around its farthest pair of entry centroids."""
        s = node.size
        c = node.ls[:s] / node.n[:s, None]
        d = ((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        i, j = np.unravel_index(int(np.argmax(d)), d.shape)
        if i == j:
            # all centroids coincide
            to_a = np.arange(s) < (s + 1) // 2
        else:
            to_a = d[:, i] <= d[:, j]
            to_a[i], to_a[j] = True, False
        halves = []
        for mask in (to_a, ~to_a):
            idx = np.nonzero(mask)[0]
            h = _Node(node.leaf, self.k, self.B)
            h.size = len(idx)
            h.n[:h.size] = node.n[idx]
            h.ls[:h.size] = node.ls[idx]
            h.ss[:h.size] = node.ss[idx]
            if not node.leaf:
                h.children = [node.children[t] for t in idx]
            halves.append(h)
        return halves[0], halves[1]

    # ------------------------------------------------------------ inspect

    def root_cf(self) -> ClusteringFeature:
        return self.root.total(self.k)

    def leaf_entries(self) -> list[ClusteringFeature]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.leaf:
                out.extend(node.cf(i) for i in range(node.size))
            else:
                stack.extend(reversed(node.children[:node.size]))
        return out

    def check_invariants(self, rtol: float = 1e-9) -> None:
        def walk(node):
            assert node.size <= self.B
            if node.leaf:
                for i in range(node.size):
                    assert cf_radius(node.cf(i)) <= self.T * (1 + 1e-9) + 1e-12
                return
            for i in range(node.size):
                child = node.children[i]
                t = child.total(self.k)
                assert t.n == node.n[i]
                assert np.allclose(t.ls, node.ls[i], rtol=rtol, atol=1e-9)
                walk(child)

        walk(self.root)


def birch_global(leaf_cfs: list[ClusteringFeature], k: int) -> list[list[int]]:
    """Merge leaf CFs agglomeratively until ``k`` groups remain.

    Merge cost between groups a and b is n_a*n_b/(n_a+n_b) * |c_a - c_b|^2.
    Returns groups of leaf-entry indices.
    """
    m = len(leaf_cfs)
    if k < 1:
        raise BadParams("k must be >= 1")
    if k > m:
        raise TooFewSubclusters(f"{m} subclusters cannot form {k} clusters")
    n = np.array([cf.n for cf in leaf_cfs], dtype=float)
    ls = np.stack([cf.ls for cf in leaf_cfs]).astype(float)
    members = [[i] for i in range(m)]
    alive = np.ones(m, dtype=bool)

    def costs(i):
        c = ls / n[:, None]
        d = ((c - c[i]) ** 2).sum(axis=1)
        w = n * n[i] / (n + n[i])
        out = w * d
        out[~alive] = np.inf
        out[i] = np.inf
        return out

    cost = np.full((m, m), np.inf)
    for i in range(m):
        cost[i] = costs(i)
    groups = m
    while groups > k:
        flat = int(np.argmin(cost))
        i, j = divmod(flat, m)
        if i > j:
            i, j = j, i
        n[i] += n[j]
        ls[i] += ls[j]
        members[i].extend(members[j])
        members[j] = []
        alive[j] = False
        cost[j, :] = np.inf
        cost[:, j] = np.inf
        row = costs(i)
        cost[i, :] = row
        cost[:, i] = row
        groups -= 1
    return [sorted(members[i]) for i in range(m) if alive[i]]


@dataclass
class BirchResult:
    tree: CfTree
    groups: list
    centroids: np.ndarray
    labels: Optional[np.ndarray] = None


def birch(points, k: int, threshold: float, branching: int = 50, label: bool = True) -> BirchResult:
    """CF-tree compression, global merge to ``k`` clusters, nearest-centroid labels."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    tree = CfTree(pts.shape[1], threshold, branching)
    for p in pts:
        tree.insert(p)
    leaves = tree.leaf_entries()
    groups = birch_global(leaves, k)
    cents = np.stack([
        sum((leaves[i] for i in g[1:]), leaves[g[0]]).centroid() for g in groups
    ])
    labels = None
    if label:
        labels = np.empty(len(pts), dtype=int)
        for s in range(0, len(pts), 4096):
            chunk = pts[s:s + 4096]
            d = ((chunk[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
            labels[s:s + 4096] = np.argmin(d, axis=1)
    return BirchResult(tree, groups, cents, labels)

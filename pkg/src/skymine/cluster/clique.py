"""CLIQUE: dense grid units found bottom-up over subspaces, connected into
clusters, and covered by a small set of axis-aligned regions."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from ..errors import BadParams


@dataclass(frozen=True)
class GridUnit:
    subspace: tuple  # sorted dimension indices
    intervals: tuple  # one interval index per subspace dimension
    count: int
    selectivity: float


@dataclass
class Grid:
    lo: np.ndarray
    hi: np.ndarray
    xi: int

    def cells(self, data: np.ndarray) -> np.ndarray:
        """Interval index of every coordinate; the last interval is right-closed."""
        width = self.hi - self.lo
        safe = np.where(width > 0, width, 1.0)
        idx = np.floor((data - self.lo) / safe * self.xi).astype(np.int64)
        return np.clip(idx, 0, self.xi - 1)

    def edges(self, dim: int, interval: int) -> tuple[float, float]:
        w = (self.hi[dim] - self.lo[dim]) / self.xi
        return float(self.lo[dim] + interval * w), float(self.lo[dim] + (interval + 1) * w)


def make_grid(data: np.ndarray, xi: int) -> Grid:
    return Grid(data.min(axis=0), data.max(axis=0), xi)


def _check(xi, tau):
    if xi < 1 or not (0.0 < tau < 1.0):
        raise BadParams(f"need xi >= 1 and 0 < tau < 1 (got xi={xi}, tau={tau})")


def count_units(cells: np.ndarray, subspace: tuple, xi: int, chunk: int = 1 << 18) -> dict:
    """Point counts of every occupied unit in ``subspace``; chunked counts are summed."""
    cols = list(subspace)
    radix = xi ** np.arange(len(cols) - 1, -1, -1, dtype=np.int64)
    n_bins = xi ** len(cols)
    if n_bins <= 1 << 22:
        total = np.zeros(n_bins, dtype=np.int64)
        for s in range(0, len(cells), chunk):
            total += np.bincount(cells[s:s + chunk, cols] @ radix, minlength=n_bins)
        keys = np.nonzero(total)[0]
        vals = total[keys]
    else:
        acc: dict = defaultdict(int)
        for s in range(0, len(cells), chunk):
            u, c = np.unique(cells[s:s + chunk, cols] @ radix, return_counts=True)
            for key, cnt in zip(u.tolist(), c.tolist()):
                acc[key] += cnt
        keys = np.array(sorted(acc), dtype=np.int64)
        vals = np.array([acc[key] for key in keys.tolist()], dtype=np.int64)
    units = (keys[:, None] // radix) % xi
    return {tuple(u): int(c) for u, c in zip(units.tolist(), vals.tolist())}


def _join_candidates(dense: dict) -> dict:
    """Apriori join of q-d dense units into (q+1)-d candidates, pruned by
    requiring every q-d projection to be dense."""
    by_prefix: dict = defaultdict(list)
    for sub, units in dense.items():
        for u in units:
            by_prefix[(sub[:-1], u[:-1])].append((sub[-1], u[-1]))
    cands: dict = defaultdict(set)
    for (psub, pu), tails in by_prefix.items():
        tails.sort()
        for (d1, i1), (d2, i2) in combinations(tails, 2):
            if d1 >= d2:
                continue
            sub = psub + (d1, d2)
            unit = pu + (i1, i2)
            ok = True
            for drop in range(len(sub)):
                ps = sub[:drop] + sub[drop + 1:]
                pu2 = unit[:drop] + unit[drop + 1:]
                if pu2 not in dense.get(ps, ()):
                    ok = False
                    break
            if ok:
                cands[sub].add(unit)
    return cands


def clique_dense_units(data, xi: int = 10, tau: float = 0.02, max_dim: Optional[int] = None,
                       grid: Optional[Grid] = None) -> dict:
    """Dense units grouped by subspace: ``{subspace: {intervals: GridUnit}}``.

    A unit is dense when its point fraction exceeds ``tau``.
    """
    _check(xi, tau)
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    N, k = X.shape
    if N == 0:
        return {}
    grid = grid or make_grid(X, xi)
    cells = grid.cells(X)
    thresh = tau * N
    result: dict = {}
    level: dict = {}
    for d in range(k):
        counts = count_units(cells, (d,), grid.xi)
        units = {u: c for u, c in counts.items() if c > thresh}
        if units:
            level[(d,)] = units
    q = 1
    while level:
        for sub, units in level.items():
            result[sub] = {u: GridUnit(sub, u, c, c / N) for u, c in units.items()}
        if max_dim is not None and q >= max_dim:
            break
        cands = _join_candidates({s: set(u) for s, u in level.items()})
        nxt: dict = {}
        for sub in sorted(cands):
            counts = count_units(cells, sub, grid.xi)
            units = {u: counts[u] for u in cands[sub] if counts.get(u, 0) > thresh}
            if units:
                nxt[sub] = units
        level = nxt
        q += 1
    return result


def clique_identify_clusters(units) -> list[list[tuple]]:
    """Connected components of units under shared-face adjacency
    (interval indices differ by 1 in exactly one dimension)."""
    cells = sorted(set(u.intervals if isinstance(u, GridUnit) else tuple(u) for u in units))
    unit_set = set(cells)
    seen: set = set()
    out = []
    for start in cells:
        if start in seen:
            continue
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for d in range(len(u)):
                for step in (-1, 1):
                    v = u[:d] + (u[d] + step,) + u[d + 1:]
                    if v in unit_set and v not in seen:
                        seen.add(v)
                        stack.append(v)
        out.append(sorted(comp))
    return out


def _region_units(lo: tuple, hi: tuple) -> list[tuple]:
    ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
    out = [()]
    for r in ranges:
        out = [u + (i,) for u in out for i in r]
    return out


def clique_minimal_description(cluster_units) -> list[tuple[tuple, tuple]]:
    """Cover a connected unit set with maximal axis-aligned regions.

    Regions are (low interval indices, high interval indices), inclusive.
    Greedy growth from each uncovered unit, dimension by dimension, then
    removal of regions whose units are covered by the remaining ones.
    """
    units = sorted(set(tuple(u.intervals if isinstance(u, GridUnit) else u) for u in cluster_units))
    if not units:
        return []
    unit_set = set(units)
    q = len(units[0])
    covered: set = set()
    regions = []
    for start in units:
        if start in covered:
            continue
        lo, hi = list(start), list(start)
        for d in range(q):
            for direction in (-1, 1):
                while True:
                    trial_lo, trial_hi = list(lo), list(hi)
                    if direction < 0:
                        trial_lo[d] -= 1
                        slab_lo, slab_hi = list(trial_lo), list(hi)
                        slab_hi[d] = trial_lo[d]
                    else:
                        trial_hi[d] += 1
                        slab_lo, slab_hi = list(lo), list(trial_hi)
                        slab_lo[d] = trial_hi[d]
                    if all(u in unit_set for u in _region_units(tuple(slab_lo), tuple(slab_hi))):
                        lo, hi = trial_lo, trial_hi
                    else:
                        break
        region = (tuple(lo), tuple(hi))
        regions.append(region)
        covered.update(_region_units(*region))
    # drop redundant regions, smallest first
    sizes = {r: len(_region_units(*r)) for r in regions}
    keep = list(regions)
    for r in sorted(regions, key=lambda r: (sizes[r], r)):
        others = [o for o in keep if o != r]
        if not others:
            break
        rest: set = set()
        for o in others:
            rest.update(_region_units(*o))
        if set(_region_units(*r)) <= rest:
            keep = others
    return keep


@dataclass
class SubspaceCluster:
    subspace: tuple
    units: list
    regions: list  # (low indices, high indices)

    def describe(self, grid: Grid) -> list[list[tuple[int, float, float]]]:
        """Regions as lists of (dimension, low edge, high edge)."""
        out = []
        for lo, hi in self.regions:
            out.append([(d, grid.edges(d, a)[0], grid.edges(d, b)[1])
                        for d, a, b in zip(self.subspace, lo, hi)])
        return out


@dataclass
class CliqueResult:
    grid: Grid
    dense: dict
    clusters: list


def clique(data, xi: int = 10, tau: float = 0.02, max_dim: Optional[int] = None) -> CliqueResult:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    grid = make_grid(X, xi)
    dense = clique_dense_units(X, xi, tau, max_dim, grid)
    clusters = []
    for sub in sorted(dense, key=lambda s: (-len(s), s)):
        for comp in clique_identify_clusters(dense[sub].values()):
            clusters.append(SubspaceCluster(sub, comp, clique_minimal_description(comp)))
    return CliqueResult(grid, dense, clusters)


def clique_labels(data, result: CliqueResult) -> np.ndarray:
    """Each point gets the first cluster (highest dimensionality first) whose
    units contain it, or -1."""
    X = np.asarray(data, dtype=float)
    cells = result.grid.cells(X.reshape(len(X), -1))
    labels = np.full(len(X), -1, dtype=int)
    for cid, cl in enumerate(result.clusters):
        members = set(cl.units)
        sub = cells[:, list(cl.subspace)]
        free = labels < 0
        hit = np.array([tuple(r) in members for r in sub.tolist()], dtype=bool)
        labels[free & hit] = cid
    return labels

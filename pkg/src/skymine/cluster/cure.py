"""CURE: agglomerative clustering with shrunk well-scattered representatives."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..errors import BadParams, SampleTooLarge


def draw_sample(items: Iterable, size: int, seed: int = 42, n: Optional[int] = None) -> list[int]:
    """Uniform without-replacement reservoir sample of positions from a stream.

    Returns the sampled positions in ascending order. ``n`` is checked
    against ``size`` up front when the stream length is known.
    """
    if size < 0:
        raise BadParams("sample size must be >= 0")
    if n is not None and size > n:
        raise SampleTooLarge(f"sample of {size} from {n} records")
    rng = random.Random(seed)
    reservoir: list[int] = []
    seen = 0
    for pos, _ in enumerate(items):
        seen += 1
        if len(reservoir) < size:
            reservoir.append(pos)
        else:
            j = rng.randrange(seen)
            if j < size:
                reservoir[j] = pos
    if size > seen:
        raise SampleTooLarge(f"sample of {size} from {seen} records")
    return sorted(reservoir)


@dataclass
class CureCluster:
    members: list
    centroid: np.ndarray
    representatives: np.ndarray
    scattered: np.ndarray


def scattered_points(points: np.ndarray, centroid: np.ndarray, c: int) -> np.ndarray:
    """Greedy farthest-point selection of up to ``c`` member points."""
    if len(points) <= c:
        return points.copy()
    d = ((points - centroid) ** 2).sum(axis=1)
    chosen = [int(np.argmax(d))]
    nearest = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < c:
        nxt = int(np.argmax(nearest))
        if nearest[nxt] == 0.0:
            break
        chosen.append(nxt)
        nearest = np.minimum(nearest, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen]


def shrink(scattered: np.ndarray, centroid: np.ndarray, alpha: float) -> np.ndarray:
    # (1 - alpha) * p + alpha * centroid: exactly the centroid when alpha == 1
    return (1.0 - alpha) * scattered + alpha * centroid


def _make_cluster(pts: np.ndarray, members: list, c: int, alpha: float) -> CureCluster:
    sub = pts[members]
    cent = sub.mean(axis=0)
    sc = scattered_points(sub, cent, c)
    return CureCluster(members, cent, shrink(sc, cent, alpha), sc)


def _rep_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d.min()))


@dataclass
class CureResult:
    clusters: list
    merges: list  # (i, j, distance) in merge order, indices into the evolving list
    labels: np.ndarray


def cure_cluster(sample, k: int, c: int = 10, alpha: float = 0.3) -> CureResult:
    """Merge the closest pair of clusters (closest representative pair) until ``k`` remain."""
    pts = np.asarray(sample, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n = len(pts)
    if not (1 <= k <= n) or not (0.0 <= alpha <= 1.0) or c < 1:
        raise BadParams(f"need 1 <= k <= {n}, 0 <= alpha <= 1, c >= 1 (got k={k}, alpha={alpha}, c={c})")
    clusters: list[Optional[CureCluster]] = [
        CureCluster([i], pts[i].copy(), pts[i:i + 1].copy(), pts[i:i + 1].copy()) for i in range(n)
    ]
    # singletons: representative distance is plain point distance
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    merges = []
    alive = n
    while alive > k:
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        merges.append((i, j, float(dist[i, j])))
        merged = _make_cluster(pts, sorted(clusters[i].members + clusters[j].members), c, alpha)
        clusters[i], clusters[j] = merged, None
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        for t in range(n):
            if t != i and clusters[t] is not None:
                d = _rep_distance(merged.representatives, clusters[t].representatives)
                dist[i, t] = dist[t, i] = d
        alive -= 1
    final = [cl for cl in clusters if cl is not None]
    labels = np.empty(n, dtype=int)
    for lab, cl in enumerate(final):
        labels[cl.members] = lab
    return CureResult(final, merges, labels)


def label_points(points, clusters: list[CureCluster]) -> np.ndarray:
    """Assign every point to the cluster of its nearest representative."""
    pts = np.asarray(points, dtype=float)
    reps = np.concatenate([cl.representatives for cl in clusters])
    owner = np.concatenate([np.full(len(cl.representatives), i) for i, cl in enumerate(clusters)])
    out = np.empty(len(pts), dtype=int)
    for s in range(0, len(pts), 2048):
        chunk = pts[s:s + 2048]
        d = ((chunk[:, None, :] - reps[None, :, :]) ** 2).sum(axis=2)
        out[s:s + 2048] = owner[np.argmin(d, axis=1)]
    return out


def cure(points, k: int, c: int = 10, alpha: float = 0.3, sample_size: Optional[int] = None,
         seed: int = 42) -> tuple[CureResult, np.ndarray]:
    """Cluster a sample with CURE, then label every point by nearest representative."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if sample_size is None or sample_size >= len(pts):
        idx = list(range(len(pts)))
    else:
        idx = draw_sample(range(len(pts)), sample_size, seed, n=len(pts))
    res = cure_cluster(pts[idx], k, c, alpha)
    for cl in res.clusters:
        cl.members = [idx[m] for m in cl.members]
    return res, label_points(pts, res.clusters)

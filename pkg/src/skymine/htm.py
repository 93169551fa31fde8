"""Hierarchical Triangular Mesh over the unit sphere.

Trixel ids pack the root face (3 bits, S0..S3 = 0..3, N0..N3 = 4..7)
followed by one 2-bit child code per level. Children of (v0, v1, v2) with
normalized edge midpoints w0 = mid(v1, v2), w1 = mid(v0, v2), w2 = mid(v0, v1):

    0: (v0, w2, w1)   1: (v1, w0, w2)   2: (v2, w1, w0)   3: (w0, w1, w2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import BadRadius, DimensionMismatch, LevelTooDeep

MAX_LEVEL = 20

_V = np.array([
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
])
_ROOT_INDEX = [
    (1, 5, 2), (2, 5, 3), (3, 5, 4), (4, 5, 1),  # S0..S3
    (1, 0, 4), (4, 0, 3), (3, 0, 2), (2, 0, 1),  # N0..N3
]
ROOT_NAMES = ("S0", "S1", "S2", "S3", "N0", "N1", "N2", "N3")


@dataclass(frozen=True, order=True)
class TrixelId:
    level: int
    bits: int

    @property
    def face(self) -> int:
        return self.bits >> (2 * self.level)

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple((self.bits >> (2 * (self.level - 1 - i))) & 3 for i in range(self.level))

    @property
    def bit_length(self) -> int:
        return 3 + 2 * self.level

    def child(self, code: int) -> "TrixelId":
        return TrixelId(self.level + 1, (self.bits << 2) | code)

    def parent(self) -> "TrixelId":
        if self.level == 0:
            raise ValueError("root trixel has no parent")
        return TrixelId(self.level - 1, self.bits >> 2)

    def ancestor(self, level: int) -> "TrixelId":
        return TrixelId(level, self.bits >> (2 * (self.level - level)))

    def name(self) -> str:
        return ROOT_NAMES[self.face] + "".join(map(str, self.codes))

    def __str__(self) -> str:
        return f"{self.level}:{self.bits}"

    @classmethod
    def parse(cls, text: str) -> "TrixelId":
        level, bits = text.split(":")
        return cls(int(level), int(bits))


@dataclass(frozen=True)
class SphericalPoint:
    ra: float
    dec: float

    @property
    def unit_vector(self) -> np.ndarray:
        return radec_to_vector(self.ra, self.dec)

    @classmethod
    def from_vector(cls, v) -> "SphericalPoint":
        ra, dec = vector_to_radec(np.asarray(v, dtype=float))
        return cls(float(ra), float(dec))


def radec_to_vector(ra, dec) -> np.ndarray:
    ra = np.radians(np.asarray(ra, dtype=float))
    dec = np.radians(np.asarray(dec, dtype=float))
    cd = np.cos(dec)
    return np.stack([cd * np.cos(ra), cd * np.sin(ra), np.sin(dec)], axis=-1)


def vector_to_radec(v) -> tuple:
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    ra = np.degrees(np.arctan2(y, x)) % 360.0
    dec = np.degrees(np.arctan2(z, np.hypot(x, y)))
    return ra, dec


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SphericalTriangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.v0, self.v1, self.v2])

    def area(self) -> float:
        return spherical_area(self.v0, self.v1, self.v2)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.dot(np.cross(self.v0, self.v1), p) >= -tol
                    and np.dot(np.cross(self.v1, self.v2), p) >= -tol
                    and np.dot(np.cross(self.v2, self.v0), p) >= -tol)

    def children(self) -> list["SphericalTriangle"]:
        v0, v1, v2 = self.v0, self.v1, self.v2
        w0, w1, w2 = _unit(v1 + v2), _unit(v0 + v2), _unit(v0 + v1)
        return [
            SphericalTriangle(v0, w2, w1),
            SphericalTriangle(v1, w0, w2),
            SphericalTriangle(v2, w1, w0),
            SphericalTriangle(w0, w1, w2),
        ]


def spherical_area(a, b, c) -> float:
    """Spherical excess of the triangle (a, b, c) on the unit sphere."""
    num = abs(float(np.dot(a, np.cross(b, c))))
    den = 1.0 + float(np.dot(a, b)) + float(np.dot(b, c)) + float(np.dot(c, a))
    return 2.0 * math.atan2(num, den)


def root_faces() -> list[SphericalTriangle]:
    return [SphericalTriangle(_V[i], _V[j], _V[k]) for i, j, k in _ROOT_INDEX]


def root_ids() -> list[TrixelId]:
    return [TrixelId(0, f) for f in range(8)]


def children(t: TrixelId) -> list[tuple[TrixelId, SphericalTriangle]]:
    tri = triangle(t)
    return [(t.child(c), ch) for c, ch in enumerate(tri.children())]


def triangle(t: TrixelId) -> SphericalTriangle:
    tri = root_faces()[t.face]
    for code in t.codes:
        tri = tri.children()[code]
    return tri


def iter_level(level: int) -> Iterator[tuple[TrixelId, SphericalTriangle]]:
    """Every trixel at ``level`` with its triangle, in id order."""
    stack = [(TrixelId(0, f), tri) for f, tri in reversed(list(enumerate(root_faces())))]
    while stack:
        tid, tri = stack.pop()
        if tid.level == level:
            yield tid, tri
            continue
        for c, ch in reversed(list(enumerate(tri.children()))):
            stack.append((tid.child(c), ch))


def level_vertices(level: int) -> tuple[np.ndarray, np.ndarray]:
    """All trixels at ``level`` as (bits array, vertices array (n, 3, 3))."""
    tris = root_faces()
    verts = np.stack([t.vertices for t in tris])
    bits = np.arange(8, dtype=np.int64)
    for _ in range(level):
        v0, v1, v2 = verts[:, 0], verts[:, 1], verts[:, 2]
        w0, w1, w2 = _unit(v1 + v2), _unit(v0 + v2), _unit(v0 + v1)
        kids = np.stack([
            np.stack([v0, w2, w1], axis=1),
            np.stack([v1, w0, w2], axis=1),
            np.stack([v2, w1, w0], axis=1),
            np.stack([w0, w1, w2], axis=1),
        ], axis=1)
        verts = kids.reshape(-1, 3, 3)
        bits = ((bits[:, None] << 2) | np.arange(4, dtype=np.int64)).reshape(-1)
    return bits, verts


def _edge_dets(tri: np.ndarray, p: np.ndarray) -> np.ndarray:
    # tri (..., 3, 3), p (..., 3) -> (..., 3) triple products for edges 01, 12, 20
    v0, v1, v2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    return np.stack([
        np.einsum("...i,...i->...", np.cross(v0, v1), p),
        np.einsum("...i,...i->...", np.cross(v1, v2), p),
        np.einsum("...i,...i->...", np.cross(v2, v0), p),
    ], axis=-1)


def _pick(cands: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Index of the containing candidate for each point.

    cands (n, c, 3, 3). First candidate with dets >= 0, >= 0, > 0 wins;
    points matching none (edge-on-third-edge or rounding at shared edges)
    go to the candidate whose smallest triple product is largest.
    """
    d = _edge_dets(cands, p[:, None, :])
    strict = (d[..., 0] >= 0) & (d[..., 1] >= 0) & (d[..., 2] > 0)
    hit = strict.any(axis=1)
    first = np.argmax(strict, axis=1)
    fallback = np.argmax(d.min(axis=-1), axis=1)
    return np.where(hit, first, fallback)


def locate_many(vectors, level: int) -> np.ndarray:
    """Packed trixel bits at ``level`` for an (n, 3) array of unit vectors."""
    if level < 0 or level > MAX_LEVEL:
        raise LevelTooDeep(f"level {level} outside [0, {MAX_LEVEL}]")
    p = np.asarray(vectors, dtype=float).reshape(-1, 3)
    n = len(p)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    roots = np.stack([t.vertices for t in root_faces()])
    face = _pick(np.broadcast_to(roots, (n, 8, 3, 3)), p)
    tri = roots[face]
    bits = face.astype(np.int64)
    for _ in range(level):
        v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
        w0, w1, w2 = _unit(v1 + v2), _unit(v0 + v2), _unit(v0 + v1)
        kids = np.stack([
            np.stack([v0, w2, w1], axis=1),
            np.stack([v1, w0, w2], axis=1),
            np.stack([v2, w1, w0], axis=1),
            np.stack([w0, w1, w2], axis=1),
        ], axis=1)
        code = _pick(kids, p)
        tri = kids[np.arange(n), code]
        bits = (bits << 2) | code
    return bits


def locate(p, level: int) -> TrixelId:
    v = p.unit_vector if isinstance(p, SphericalPoint) else np.asarray(p, dtype=float)
    return TrixelId(level, int(locate_many(v[None, :], level)[0]))


# ----------------------------------------------------------------- cap cover


def _angle(a, b) -> float:
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


def min_angular_distance(c, tri: SphericalTriangle) -> float:
    """Smallest angle (radians) from unit vector ``c`` to any point of ``tri``."""
    if tri.contains(c):
        return 0.0
    best = math.inf
    verts = (tri.v0, tri.v1, tri.v2)
    for a, b in ((verts[0], verts[1]), (verts[1], verts[2]), (verts[2], verts[0])):
        n = np.cross(a, b)
        n = n / np.linalg.norm(n)
        proj = c - np.dot(c, n) * n
        norm = np.linalg.norm(proj)
        if norm > 0:
            q = proj / norm
            if np.dot(np.cross(a, q), n) >= 0 and np.dot(np.cross(q, b), n) >= 0:
                best = min(best, _angle(c, q))
                continue
        best = min(best, _angle(c, a), _angle(c, b))
    return best


def classify_cap(center, radius_rad: float, tri: SphericalTriangle) -> str:
    """'full', 'partial' or 'out' for a closed cap against a triangle."""
    if min_angular_distance(center, tri) > radius_rad:
        return "out"
    # farthest point of tri from center == pi - nearest distance to the antipode
    if math.pi - min_angular_distance(-center, tri) <= radius_rad:
        return "full"
    return "partial"


def _descendants(t: TrixelId, level: int) -> list[TrixelId]:
    shift = 2 * (level - t.level)
    base = t.bits << shift
    return [TrixelId(level, base | i) for i in range(1 << shift)]


def cover_cap(center, radius_deg: float, level: int) -> tuple[list[TrixelId], list[TrixelId]]:
    """Trixels at ``level`` fully inside / crossing the boundary of a cap."""
    if not (0.0 < radius_deg <= 180.0):
        raise BadRadius(f"radius {radius_deg} outside (0, 180]")
    if level < 0 or level > MAX_LEVEL:
        raise LevelTooDeep(f"level {level} outside [0, {MAX_LEVEL}]")
    c = center.unit_vector if isinstance(center, SphericalPoint) else np.asarray(center, dtype=float)
    r = math.radians(radius_deg)
    full: list[TrixelId] = []
    partial: list[TrixelId] = []
    stack = [(TrixelId(0, f), tri) for f, tri in enumerate(root_faces())]
    while stack:
        tid, tri = stack.pop()
        kind = classify_cap(c, r, tri)
        if kind == "out":
            continue
        if kind == "full":
            full.extend(_descendants(tid, level))
        elif tid.level == level:
            partial.append(tid)
        else:
            for code, ch in enumerate(tri.children()):
                stack.append((tid.child(code), ch))
    return sorted(full), sorted(partial)


# ---------------------------------------------------------------- partition


@dataclass
class HtmPartition:
    level: int
    buckets: dict

    def __len__(self):
        return sum(len(v) for v in self.buckets.values())

    def rows(self) -> list[tuple[TrixelId, int]]:
        return [(t, i) for t in sorted(self.buckets) for i in self.buckets[t]]

    def to_csv(self) -> str:
        lines = ["trixel_id,record_index"]
        lines.extend(f"{t},{i}" for t, i in self.rows())
        return "\n".join(lines) + "\n"


def partition(ra: Sequence[float], dec: Sequence[float], level: int = 5) -> HtmPartition:
    """Bucket record indices by their level-``level`` trixel."""
    ra = np.asarray(ra, dtype=float)
    dec = np.asarray(dec, dtype=float)
    if len(ra) != len(dec):
        raise DimensionMismatch("ra and dec lengths differ")
    bits = locate_many(radec_to_vector(ra, dec).reshape(-1, 3), level)
    buckets: dict = {}
    for i, b in enumerate(bits.tolist()):
        buckets.setdefault(TrixelId(level, b), []).append(i)
    return HtmPartition(level, buckets)

"""Synthetic catalogs for tests and the ``gen`` command."""

from __future__ import annotations

import numpy as np

from .catalog import CatalogSchema, ColumnMeta
from .errors import UsageError
from .htm import radec_to_vector, vector_to_radec

DEFAULT_SCHEMA = CatalogSchema((
    ColumnMeta("ra", "angle", "deg"),
    ColumnMeta("dec", "angle", "deg"),
    ColumnMeta("mag", "magnitude", "mag"),
))


def sky_uniform(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return vector_to_radec(v)


def sky_clustered(n: int, rng: np.random.Generator, clusters: int = 5,
                  sigma_deg: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    cra, cdec = sky_uniform(clusters, rng)
    centers = radec_to_vector(cra, cdec).reshape(-1, 3)
    which = rng.integers(0, clusters, n)
    v = centers[which] + rng.normal(scale=np.radians(sigma_deg), size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return vector_to_radec(v)


def clustered_points(n: int, k: int, rng: np.random.Generator, clusters: int = 10,
                     spread: float = 0.02) -> np.ndarray:
    """Gaussian blobs in the unit cube, clipped to [0, 1]."""
    centers = rng.random((clusters, k))
    pts = centers[rng.integers(0, clusters, n)] + rng.normal(scale=spread, size=(n, k))
    return np.clip(pts, 0.0, 1.0)


def two_arcs(n_per_arc: int, rng: np.random.Generator, noise: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Two interlocking half circles with planted labels 0 and 1."""
    t = rng.uniform(0, np.pi, n_per_arc)
    a = np.c_[np.cos(t), np.sin(t)]
    t2 = rng.uniform(0, np.pi, n_per_arc)
    b = np.c_[1 - np.cos(t2), 0.5 - np.sin(t2)]
    X = np.vstack([a, b]) + rng.normal(scale=noise, size=(2 * n_per_arc, 2))
    return X, np.r_[np.zeros(n_per_arc, dtype=int), np.ones(n_per_arc, dtype=int)]


def parse_spec(spec: str) -> tuple[str, dict]:
    """``"clustered:n=1000,clusters=5"`` -> ("clustered", {"n": "1000", ...})."""
    kind, _, rest = spec.partition(":")
    opts = {}
    for part in filter(None, (p.strip() for p in rest.split(","))):
        if "=" not in part:
            raise UsageError(f"generator option {part!r} is not key=value")
        k, v = part.split("=", 1)
        opts[k.strip()] = v.strip()
    return kind.strip(), opts


def generate_catalog(spec: str, seed: int = 42) -> str:
    """CSV text (ra, dec, mag) for a generator spec: ``uniform`` or ``clustered``."""
    kind, opts = parse_spec(spec)
    try:
        n = int(opts.pop("n", "1000"))
        seed = int(opts.pop("seed", seed))
        rng = np.random.default_rng(seed)
        if kind == "uniform":
            ra, dec = sky_uniform(n, rng)
        elif kind == "clustered":
            ra, dec = sky_clustered(n, rng, int(opts.pop("clusters", "5")), float(opts.pop("sigma", "2.0")))
        else:
            raise UsageError(f"unknown generator {kind!r} (expected uniform or clustered)")
    except ValueError as exc:
        raise UsageError(f"bad generator option: {exc}") from None
    if opts:
        raise UsageError(f"unknown generator options {sorted(opts)}")
    mag = rng.uniform(12.0, 22.0, n)
    lines = ["ra,dec,mag"]
    lines.extend(f"{a!r},{d!r},{m!r}" for a, d, m in zip(ra.tolist(), dec.tolist(), mag.tolist()))
    return "\n".join(lines) + "\n"

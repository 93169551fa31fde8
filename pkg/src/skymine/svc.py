"""Support Vector Clustering with a Gaussian kernel.

Training maximizes the minimum-enclosing-sphere dual

    W(beta) = sum_i beta_i K(x_i, x_i) - sum_ij beta_i beta_j K(x_i, x_j)
    subject to 0 <= beta_i <= C, sum_i beta_i = 1

by pairwise coordinate ascent. Points with beta_i = C are bounded support
vectors (outliers); 0 < beta_i < C are support vectors on the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BadParams, InfeasibleC, NoConvergence

INTERIOR, SV, BSV = 0, 1, 2
KERNEL_CACHE_LIMIT = 10_000


@dataclass(frozen=True)
class SvcParams:
    q: float = 1.0
    C: float = 1.0
    tol: float = 1e-6
    max_iter: int = 100_000
    m: int = 20

    def __post_init__(self):
        if not self.q > 0:
            raise BadParams("kernel width q must be > 0")
        if not self.C > 0:
            raise BadParams("C must be > 0")
        if self.m < 1:
            raise BadParams("m must be >= 1")
        if self.tol <= 0 or self.max_iter < 1:
            raise BadParams("tol must be > 0 and max_iter >= 1")


def gaussian_kernel(a: np.ndarray, b: np.ndarray, q: float) -> np.ndarray:
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-q * np.maximum(d2, 0.0))


def dual_objective(K: np.ndarray, beta: np.ndarray) -> float:
    return float(np.diag(K) @ beta - beta @ K @ beta)


def dual_gradient(K: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.diag(K) - 2.0 * K @ beta


@dataclass
class SvcModel:
    points: np.ndarray
    beta: np.ndarray
    params: SvcParams
    R: float
    kind: np.ndarray
    bKb: float
    objective: float
    iterations: int
    history: list = field(default_factory=list, repr=False)

    @property
    def support_vectors(self) -> np.ndarray:
        return np.nonzero(self.kind == SV)[0]

    @property
    def bounded_support_vectors(self) -> np.ndarray:
        return np.nonzero(self.kind == BSV)[0]

    def feature_distance(self, x) -> np.ndarray:
        return feature_distance(self, x)


class _Kernel:
    """Kernel columns, fully cached for small problems, computed on demand otherwise."""

    def __init__(self, X: np.ndarray, q: float):
        self.X = X
        self.q = q
        self.full = gaussian_kernel(X, X, q) if len(X) <= KERNEL_CACHE_LIMIT else None

    def col(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        return gaussian_kernel(self.X, self.X[i:i + 1], self.q)[:, 0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.full is not None:
            return self.full @ v
        out = np.zeros(len(self.X))
        for s in range(0, len(self.X), 1024):
            out += gaussian_kernel(self.X, self.X[s:s + 1024], self.q) @ v[s:s + 1024]
        return out


def _initial_beta(n: int, C: float) -> np.ndarray:
    beta = np.zeros(n)
    left = 1.0
    for i in range(n):
        take = min(C, left)
        beta[i] = take
        left -= take
        if left <= 0:
            break
    return beta


def train(points, params: Optional[SvcParams] = None, record_history: bool = False) -> SvcModel:
    """Fit the enclosing sphere. Raises :class:`InfeasibleC` when C < 1/N."""
    params = params or SvcParams()
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = len(X)
    if n < 1:
        raise BadParams("SVC needs at least one point")
    C = params.C
    if C * n < 1.0 - 1e-12:
        raise InfeasibleC(f"C={C} < 1/N={1.0 / n}: coefficients cannot sum to 1")
    kern = _Kernel(X, params.q)
    beta = _initial_beta(n, C)
    diag = np.ones(n)  # Gaussian kernel: K(x, x) = 1
    Kb = kern.matvec(beta)
    grad = diag - 2.0 * Kb
    history = []
    obj = float(diag @ beta - beta @ Kb)
    if record_history:
        history.append(obj)
    it = 0
    converged = False
    while it < params.max_iter:
        up = beta < C  # may increase
        down = beta > 0  # may decrease
        if not up.any() or not down.any():
            converged = True
            break
        gu = np.where(up, grad, -np.inf)
        gd = np.where(down, grad, np.inf)
        i = int(np.argmax(gu))
        j = int(np.argmin(gd))
        if gu[i] - gd[j] <= params.tol:
            converged = True
            break
        ki, kj = kern.col(i), kern.col(j)
        eta = diag[i] + diag[j] - 2.0 * ki[j]
        room = min(C - beta[i], beta[j])
        t = room if eta <= 0 else min(room, (gu[i] - gd[j]) / (2.0 * eta))
        if t <= 0:
            converged = True
            break
        beta[i] += t
        beta[j] -= t
        if beta[j] < 0:
            beta[j] = 0.0
        grad -= 2.0 * t * (ki - kj)
        it += 1
        if record_history:
            Kb = kern.matvec(beta)
            history.append(float(diag @ beta - beta @ Kb))
    if not converged:
        raise NoConvergence(f"no convergence within {params.max_iter} iterations")

    Kb = kern.matvec(beta)
    bKb = float(beta @ Kb)
    obj = float(diag @ beta - bKb)
    eps = 1e-9 * max(1.0, C)
    kind = np.full(n, INTERIOR)
    kind[beta > eps] = SV
    if C < 1.0:
        # with C >= 1 a coefficient at the bound carries all the weight alone
        kind[beta >= C - eps] = BSV
    dist2 = np.maximum(0.0, diag - 2.0 * Kb + bKb)
    dist = np.sqrt(dist2)
    svs = kind == SV
    if svs.any():
        R = float(dist[svs].mean())
    else:
        inner = dist[kind == INTERIOR]
        outer = dist[kind == BSV]
        lo = float(inner.max()) if len(inner) else None
        hi = float(outer.min()) if len(outer) else None
        R = (lo + hi) / 2 if lo is not None and hi is not None else (lo if lo is not None else hi or 0.0)
    return SvcModel(X, beta, params, R, kind, bKb, obj, it, history)


def feature_distance(model: SvcModel, x) -> np.ndarray:
    """Distance from the sphere centre in feature space for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.points.shape[1] and model.points.shape[1] == 1:
        x = x.reshape(-1, 1)
    active = model.beta > 0
    out = np.empty(len(x))
    for s in range(0, len(x), 4096):
        k = gaussian_kernel(x[s:s + 4096], model.points[active], model.params.q)
        out[s:s + 4096] = 1.0 - 2.0 * k @ model.beta[active] + model.bKb
    return np.sqrt(np.maximum(out, 0.0))


def label_clusters(model: SvcModel, slack: Optional[float] = None) -> np.ndarray:
    """Cluster id per training point, -1 for bounded support vectors.

    Two non-BSV points are adjacent when ``m`` equidistant interior samples of
    the segment between them all stay within the sphere radius (plus
    ``slack``, default 10 x solver tolerance).
    """
    slack = 10 * model.params.tol if slack is None else slack
    X = model.points
    n = len(X)
    keep = np.nonzero(model.kind != BSV)[0]
    labels = np.full(n, -1, dtype=int)
    if len(keep) == 0:
        return labels
    m = model.params.m
    ts = np.arange(1, m + 1) / (m + 1)
    limit = model.R + slack
    rows, cols = [], []
    ii, jj = np.triu_indices(len(keep), k=1)
    batch = max(1, 20000 // m)
    for s in range(0, len(ii), batch):
        a = X[keep[ii[s:s + batch]]]
        b = X[keep[jj[s:s + batch]]]
        seg = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
        d = feature_distance(model, seg.reshape(-1, X.shape[1])).reshape(len(a), m)
        ok = np.all(d <= limit, axis=1)
        rows.extend(ii[s:s + batch][ok].tolist())
        cols.extend(jj[s:s + batch][ok].tolist())
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(keep), len(keep)))
    _, comp = connected_components(g, directed=False)
    # renumber components by first appearance
    remap: dict = {}
    for idx, c in zip(keep, comp):
        labels[idx] = remap.setdefault(int(c), len(remap))
    return labels


def summary(model: SvcModel) -> dict:
    return {
        "n_sv": int((model.kind == SV).sum()),
        "n_bsv": int((model.kind == BSV).sum()),
        "R": model.R,
        "objective": model.objective,
        "iterations": model.iterations,
    }


def max_bsv(C: float) -> int:
    return math.floor(1.0 / C + 1e-9)

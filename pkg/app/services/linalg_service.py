from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg as sla
from scipy.spatial.distance import pdist, squareform

from app.core.errors import DomainError, NotPositiveDefinite
from app.services import kernel_service as ks
from app.services.parallel_service import ParallelMap, derive_rng

logger = logging.getLogger(__name__)

JITTER_LADDER = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
ORDERINGS = ("natural", "random", "maxmin")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SiteSet:
    points: np.ndarray
    ordering_tag: str = "natural"

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])


@dataclass(frozen=True, eq=False)
class SymMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True, eq=False)
class CholFactor:
    L: np.ndarray
    logdet: float
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return int(self.L.shape[0])


@dataclass(frozen=True)
class SparsityReport:
    family: str
    kappa: float
    mu: float
    C: float
    n: int
    pct_zero_cov: float
    pct_quasi_prec: float
    pct_quasi_chol: float
    epsilon: float

    COLUMNS = ("family", "kappa", "mu", "C", "n", "pct_zero_cov", "pct_quasi_prec", "pct_quasi_chol", "epsilon")

    def row(self) -> tuple[Any, ...]:
        return tuple(getattr(self, name) for name in self.COLUMNS)


# ---------------------------------------------------------------- sites

def make_sites(points: Any, ordering_tag: str = "natural", check_distinct: bool = True) -> SiteSet:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[1] < 1:
        raise DomainError(f"sites must be an (n, d) array (got shape {points.shape})")
    if not np.all(np.isfinite(points)):
        raise DomainError("site coordinates must be finite")
    if check_distinct and points.shape[0] > 1 and np.unique(points, axis=0).shape[0] != points.shape[0]:
        raise DomainError("sites must be distinct")
    return SiteSet(points=_frozen(points), ordering_tag=ordering_tag)


def grid_sites(spacing: float, d: int) -> SiteSet:
    """Lattice {0, spacing, 2 spacing, ...} intersected with [0, 1]^d in lexicographic order."""
    if not spacing > 0:
        raise DomainError(f"spacing must be positive (spacing={spacing})")
    if int(d) != d or d < 1:
        raise DomainError(f"d must be a positive integer (d={d})")
    count = int(math.floor(1.0 / spacing + 1e-9)) + 1
    axis = np.arange(count) * spacing
    mesh = np.meshgrid(*([axis] * int(d)), indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return SiteSet(points=_frozen(points), ordering_tag="natural")


def ordering_permutation(sites: SiteSet, strategy: str, seed: int = 0) -> np.ndarray:
    n = sites.n
    if strategy == "natural":
        return np.lexsort(sites.points.T[::-1])
    if strategy == "random":
        return derive_rng(seed).permutation(n)
    if strategy == "maxmin":
        if n == 0:
            return np.arange(0)
        pts = sites.points
        centroid = pts.mean(axis=0)
        first = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
        order = [first]
        chosen = np.zeros(n, dtype=bool)
        chosen[first] = True
        nearest = np.linalg.norm(pts - pts[first], axis=1)
        for _ in range(n - 1):
            candidate = np.where(chosen, -np.inf, nearest)
            nxt = int(np.argmax(candidate))
            order.append(nxt)
            chosen[nxt] = True
            nearest = np.minimum(nearest, np.linalg.norm(pts - pts[nxt], axis=1))
        return np.asarray(order)
    raise DomainError(f"unknown ordering {strategy!r} (expected one of {', '.join(ORDERINGS)})")


def reorder(sites: SiteSet, strategy: str, seed: int = 0) -> SiteSet:
    perm = ordering_permutation(sites, strategy, seed)
    tag = f"random({seed})" if strategy == "random" else strategy
    return SiteSet(points=_frozen(sites.points[perm]), ordering_tag=tag)


# ---------------------------------------------------------------- matrices

def pdist_matrix(points: np.ndarray) -> np.ndarray:
    return squareform(pdist(np.asarray(points, dtype=float)))


def _stationary(kernel: ks.KernelSpec) -> bool:
    return not isinstance(kernel, (ks.PaciorekNS, ks.SpaceTimeGneiting))


def build_cov_matrix(model: ks.CovarianceModel, sites: SiteSet, pmap: ParallelMap | None = None) -> SymMatrix:
    n = sites.n
    if n == 0:
        return SymMatrix(_frozen(np.zeros((0, 0))))
    kernel = model.kernel
    if not _stationary(kernel):
        block = ks.covariance_block(model, sites.points, sites.points)
        lower = np.tril(block)
        return SymMatrix(_frozen(lower + np.tril(lower, -1).T))

    d = sites.d
    ks.ensure_valid(kernel, d)
    condensed = pdist(sites.points)
    if pmap is not None and getattr(pmap, "threads", 1) > 1 and condensed.size > 100_000:
        chunks = np.array_split(condensed, pmap.threads * 4)
        values = np.concatenate(pmap.map(lambda chunk: ks.correlation_array(kernel, d, chunk), chunks))
    else:
        values = ks.correlation_array(kernel, d, condensed)
    matrix = squareform(model.sigma2 * values, checks=False)
    np.fill_diagonal(matrix, model.sigma2)
    return SymMatrix(_frozen(matrix))


def _as_array(m: SymMatrix | np.ndarray) -> np.ndarray:
    return m.entries if isinstance(m, SymMatrix) else np.asarray(m, dtype=float)


def cholesky(m: SymMatrix | np.ndarray, jitter_policy: str = "none") -> CholFactor:
    a = _as_array(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"cholesky needs a square matrix (got shape {a.shape})")
    if jitter_policy not in ("none", "escalating"):
        raise DomainError(f"unknown jitter policy {jitter_policy!r}")
    if a.shape[0] == 0:
        return CholFactor(L=_frozen(a), logdet=0.0)

    ladder = (0.0,) + (JITTER_LADDER if jitter_policy == "escalating" else ())
    scale = float(np.mean(np.diag(a)))
    for step in ladder:
        jitter = step * scale
        try:
            L = sla.cholesky(a + jitter * np.eye(a.shape[0]) if jitter else a, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if jitter:
            logger.warning("Cholesky needed jitter=%.3e n=%s", jitter, a.shape[0])
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return CholFactor(L=_frozen(L), logdet=logdet, jitter_used=jitter)
    raise NotPositiveDefinite(f"matrix of order {a.shape[0]} is not positive definite (jitter policy {jitter_policy})")


def _check_rhs(chol: CholFactor, b: Any) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != chol.n:
        raise DomainError(f"right-hand side has {b.shape[0]} rows, factor has order {chol.n}")
    return b


def solve_lower(chol: CholFactor, b: Any) -> np.ndarray:
    b = _check_rhs(chol, b)
    if chol.n == 0:
        return b.copy()
    return sla.solve_triangular(chol.L, b, lower=True)


def solve_upper(chol: CholFactor, b: Any) -> np.ndarray:
    b = _check_rhs(chol, b)
    if chol.n == 0:
        return b.copy()
    return sla.solve_triangular(chol.L.T, b, lower=False)


def solve(chol: CholFactor, b: Any) -> np.ndarray:
    """A^{-1} b through both triangular solves."""
    b = _check_rhs(chol, b)
    if chol.n == 0:
        return b.copy()
    return sla.cho_solve((chol.L, True), b)


def invert_spd(chol: CholFactor) -> np.ndarray:
    inverse = sla.cho_solve((chol.L, True), np.eye(chol.n))
    return 0.5 * (inverse + inverse.T)


def quasi_sparsity(m: SymMatrix | np.ndarray, epsilon: float) -> float:
    """Percentage of strict-upper-triangle entries with |m_ij| < epsilon; epsilon = 0 counts exact zeros."""
    if not epsilon >= 0:
        raise DomainError(f"epsilon must be >= 0 (epsilon={epsilon})")
    a = _as_array(m)
    n = a.shape[0]
    if n < 2:
        return 100.0
    hits = 0
    for i in range(n - 1):
        row = a[i, i + 1:]
        hits += int(np.count_nonzero(row == 0.0 if epsilon == 0 else np.abs(row) < epsilon))
    return 100.0 * hits / (n * (n - 1) / 2)

"""Gaussian-process machinery on top of the kernel and linalg services.

All routines take a CovarianceModel and a SiteSet or GpDataset and are pure.
Log-likelihood values always include the -(n/2) ln(2 pi) constant.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Sequence

import numpy as np
from scipy import optimize
from scipy import linalg as sla

from app.core.errors import (
    AllStartsFailed,
    ConfigError,
    DimensionOutOfRange,
    DomainError,
    FlatData,
    MaternLabError,
    NoFreeParameters,
    NotPositiveDefinite,
    UnsupportedFamily,
    UnsupportedPair,
)
from app.services import kernel_service as ks
from app.services import linalg_service as la
from app.services.parallel_service import ParallelMap, SerialMap, derive_rng

logger = logging.getLogger(__name__)

_LN_2PI = math.log(2.0 * math.pi)
_EQUIVALENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GpDataset:
    sites: la.SiteSet
    values: np.ndarray
    replicate_count: int = 1
    replicate: int = 0

    def __post_init__(self) -> None:
        if self.values.shape != (self.sites.n,):
            raise DomainError(f"values length {self.values.shape} does not match {self.sites.n} sites")


def make_dataset(sites: la.SiteSet, values: Any, replicate_count: int = 1, replicate: int = 0) -> GpDataset:
    values = np.array(values, dtype=float, copy=True).reshape(-1)
    values.setflags(write=False)
    return GpDataset(sites=sites, values=values, replicate_count=replicate_count, replicate=replicate)


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float

    def to_json(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ConcentratedLoglik:
    value: float
    sigma2_hat: float


@dataclass(frozen=True)
class FitResult:
    theta_hat: ks.KernelSpec
    loglik: float
    sigma2_hat: float
    micro_hat: float
    iterations: int
    converged: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "theta_hat": ks.spec_to_json(self.theta_hat),
            "loglik": self.loglik,
            "sigma2_hat": self.sigma2_hat,
            "micro_hat": self.micro_hat,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    condition_residual: float
    condition: str


@dataclass(frozen=True)
class MisspecifiedMse:
    mse_under_true_with_working_pred: float
    mse_oracle: float
    ratio_efficiency: float
    mse_believed_by_working: float
    ratio_variance_assessment: float


# ---------------------------------------------------------------- simulation

def simulate(
    model: ks.CovarianceModel,
    sites: la.SiteSet,
    seed: int,
    replicates: int = 1,
    pmap: ParallelMap | None = None,
    jitter_policy: str = "escalating",
    stream: tuple[int, ...] = (),
) -> list[GpDataset]:
    """Replicate r draws its normals from derive_rng(seed, *stream, r)."""
    if replicates < 1:
        raise DomainError(f"replicates must be positive (replicates={replicates})")
    chol = la.cholesky(la.build_cov_matrix(model, sites, pmap), jitter_policy)
    n = sites.n

    def one(index: int) -> GpDataset:
        u = derive_rng(seed, *stream, index).standard_normal(n)
        return make_dataset(sites, chol.L @ u, replicate_count=replicates, replicate=index)

    return (pmap or SerialMap()).map(one, range(replicates))


def reorder_dataset(data: GpDataset, strategy: str, seed: int = 0) -> GpDataset:
    perm = la.ordering_permutation(data.sites, strategy, seed)
    tag = f"random({seed})" if strategy == "random" else strategy
    sites = la.make_sites(data.sites.points[perm], ordering_tag=tag, check_distinct=False)
    return make_dataset(sites, data.values[perm], data.replicate_count, data.replicate)


# ---------------------------------------------------------------- kriging

def _targets(x0: Any, d: int) -> np.ndarray:
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[1] != d:
        raise DomainError(f"prediction location has dimension {x0.shape[1]}, sites have {d}")
    return x0


def _prior_variances(model: ks.CovarianceModel, x0: np.ndarray) -> np.ndarray:
    if isinstance(model.kernel, (ks.PaciorekNS, ks.SpaceTimeGneiting)):
        return np.array([ks.covariance_block(model, x[None, :], x[None, :])[0, 0] for x in x0])
    return np.full(x0.shape[0], model.sigma2)


def _coincident(points: np.ndarray, x: np.ndarray) -> int | None:
    hits = np.flatnonzero(np.all(points == x, axis=1))
    return int(hits[0]) if hits.size else None


def _weights(model: ks.CovarianceModel, sites: la.SiteSet, x0: np.ndarray) -> tuple[la.CholFactor, np.ndarray]:
    chol = la.cholesky(la.build_cov_matrix(model, sites))
    cross = ks.covariance_block(model, sites.points, x0)
    return chol, la.solve_lower(chol, cross)


def krige_many(model: ks.CovarianceModel, data: GpDataset, x0: Any) -> list[Prediction]:
    """Simple kriging at every row of x0 with one factorization."""
    sites = data.sites
    targets = _targets(x0, sites.d)
    prior = _prior_variances(model, targets)
    if sites.n == 0:
        return [Prediction(0.0, float(v)) for v in prior]

    chol, w = _weights(model, sites, targets)
    whitened = la.solve_lower(chol, data.values)
    means = w.T @ whitened
    variances = prior - np.einsum("ij,ij->j", w, w)

    out: list[Prediction] = []
    for j, x in enumerate(targets):
        hit = _coincident(sites.points, x)
        if hit is not None:
            out.append(Prediction(float(data.values[hit]), 0.0))
            continue
        var = float(variances[j])
        if var < -1e-12 * prior[j]:
            logger.warning("Negative kriging variance clamped var=%.3e", var)
        out.append(Prediction(float(means[j]), max(var, 0.0)))
    return out


def krige(model: ks.CovarianceModel, data: GpDataset, x0: Any) -> Prediction:
    return krige_many(model, data, x0)[0]


def kriging_variance(model: ks.CovarianceModel, sites: la.SiteSet, x0: Any) -> float:
    return krige(model, make_dataset(sites, np.zeros(sites.n)), x0).variance


def power_function(model: ks.CovarianceModel, sites: la.SiteSet, x0: Any) -> float:
    return math.sqrt(kriging_variance(model, sites, x0))


def interpolant_norm2(model: ks.CovarianceModel, data: GpDataset) -> float:
    if data.sites.n == 0:
        return 0.0
    chol = la.cholesky(la.build_cov_matrix(model, data.sites))
    w = la.solve_lower(chol, data.values)
    return float(model.sigma2 * (w @ w))


# ---------------------------------------------------------------- likelihood

def log_likelihood(model: ks.CovarianceModel, data: GpDataset) -> float:
    n = data.sites.n
    chol = la.cholesky(la.build_cov_matrix(model, data.sites))
    w = la.solve_lower(chol, data.values)
    return -0.5 * (n * _LN_2PI + chol.logdet + float(w @ w))


def concentrated_loglik(kernel: ks.KernelSpec, data: GpDataset, jitter_policy: str = "none") -> ConcentratedLoglik:
    n = data.sites.n
    if n == 0 or not np.any(data.values):
        raise FlatData("all observations are zero; sigma2_hat would be 0")
    chol = la.cholesky(la.build_cov_matrix(ks.CovarianceModel(kernel, 1.0), data.sites), jitter_policy)
    w = la.solve_lower(chol, data.values)
    sigma2_hat = float(w @ w) / n
    value = -0.5 * (n * _LN_2PI + n * math.log(sigma2_hat) + chol.logdet + n)
    return ConcentratedLoglik(value=value, sigma2_hat=sigma2_hat)


def vecchia_loglik(model: ks.CovarianceModel, data: GpDataset, m: int) -> float:
    """Product of conditionals given the m nearest previous sites (ties to the lower index)."""
    if m < 0:
        raise DomainError(f"conditioning size must be >= 0 (m={m})")
    pts = data.sites.points
    z = data.values
    prior = _prior_variances(model, pts)
    total = 0.0
    for i in range(data.sites.n):
        mean, var = 0.0, float(prior[i])
        if i > 0 and m > 0:
            dist = np.linalg.norm(pts[:i] - pts[i], axis=1)
            idx = np.argsort(dist, kind="stable")[:m]
            block = ks.covariance_block(model, pts[idx], pts[idx])
            cross = ks.covariance_block(model, pts[idx], pts[i][None, :])[:, 0]
            try:
                factor = sla.cho_factor(block, lower=True)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"conditioning block for site {i} is not positive definite") from exc
            w = sla.cho_solve(factor, cross)
            mean = float(w @ z[idx])
            var -= float(w @ cross)
        if not var > 0:
            raise NotPositiveDefinite(f"conditional variance {var:.3e} at site {i}")
        total += -0.5 * (_LN_2PI + math.log(var) + (z[i] - mean) ** 2 / var)
    return total


# ---------------------------------------------------------------- fitting

def microergodic(model: ks.CovarianceModel) -> float:
    kernel, sigma2 = model.kernel, model.sigma2
    if isinstance(kernel, ks.Matern):
        return sigma2 / kernel.alpha ** (2 * kernel.nu)
    if isinstance(kernel, ks.GenWendland):
        return sigma2 / kernel.beta ** (2 * kernel.kappa + 1)
    if isinstance(kernel, ks.GenWendlandRescaled):
        radius = ks.support_radius(kernel)
        return sigma2 / radius ** (2 * kernel.kappa + 1)
    if isinstance(kernel, ks.ConfluentHypergeometric):
        log_ratio = math.lgamma(kernel.nu + kernel.eta) - math.lgamma(kernel.eta)
        return sigma2 * math.exp(log_ratio) / kernel.beta ** (2 * kernel.nu)
    raise UnsupportedFamily(f"no microergodic parameter for {kernel.family}")


def _free_names(spec: ks.KernelSpec, free: Sequence[str]) -> list[str]:
    names = [f.name for f in fields(spec)]
    out = []
    for name in free:
        if name not in names or name == "d_ref":
            raise ConfigError(f"{spec.family} has no free numeric parameter {name!r}")
        if not getattr(spec, name) > 0:
            raise ConfigError(f"free parameter {name} must start positive (got {getattr(spec, name)})")
        out.append(name)
    return out


def fit_ml(
    init: ks.KernelSpec,
    data: GpDataset,
    free: Sequence[str],
    bounds: dict[str, tuple[float, float]] | None = None,
    starts: int = 3,
    seed: int = 0,
    max_iter: int = 2000,
    xatol: float = 1e-8,
) -> FitResult:
    """Maximize the concentrated likelihood over the free parameters with Nelder-Mead on log scale."""
    names = _free_names(init, free)
    if not names:
        raise NoFreeParameters("every kernel parameter is fixed")
    if starts < 1:
        raise DomainError(f"starts must be positive (starts={starts})")

    bounds = dict(bounds or {})
    log_lo, log_hi, x_init = [], [], []
    for name in names:
        value = float(getattr(init, name))
        lo, hi = bounds.get(name, (value * 1e-3, value * 1e3))
        if not 0 < lo <= value <= hi:
            raise DomainError(f"init {name}={value} outside bounds [{lo}, {hi}]")
        log_lo.append(math.log(lo))
        log_hi.append(math.log(hi))
        x_init.append(math.log(value))
    log_lo_a, log_hi_a = np.asarray(log_lo), np.asarray(log_hi)

    def spec_at(theta: np.ndarray) -> ks.KernelSpec:
        return replace(init, **{name: float(math.exp(t)) for name, t in zip(names, theta)})

    def objective(theta: np.ndarray) -> float:
        try:
            return -concentrated_loglik(spec_at(theta), data).value
        except (MaternLabError, np.linalg.LinAlgError, ValueError, OverflowError):
            return math.inf

    rng = derive_rng(seed, len(names))
    base = np.asarray(x_init)
    candidates = [base] + [np.clip(base + rng.normal(0.0, 0.5, base.size), log_lo_a, log_hi_a) for _ in range(starts - 1)]

    best: Any = None
    for k, x0 in enumerate(candidates):
        simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(x0.size)[i] for i in range(x0.size)])
        simplex = np.clip(simplex, log_lo_a, log_hi_a)
        result = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(log_lo, log_hi)),
            options={"xatol": xatol, "fatol": 1e-10, "maxiter": max_iter, "initial_simplex": simplex},
        )
        if not math.isfinite(result.fun):
            logger.warning("Fit start failed start=%s", k)
            continue
        logger.debug("Fit start=%s loglik=%.10g nit=%s", k, -result.fun, result.nit)
        if best is None or result.fun < best.fun:
            best = result
    if best is None:
        raise AllStartsFailed(f"all {len(candidates)} optimizer starts failed for {init.family}")

    theta_hat = spec_at(best.x)
    conc = concentrated_loglik(theta_hat, data)
    try:
        micro_hat = microergodic(ks.CovarianceModel(theta_hat, conc.sigma2_hat))
    except UnsupportedFamily:
        micro_hat = math.nan
    return FitResult(
        theta_hat=theta_hat,
        loglik=conc.value,
        sigma2_hat=conc.sigma2_hat,
        micro_hat=micro_hat,
        iterations=int(best.nit),
        converged=bool(best.success) and math.isfinite(conc.value),
    )


# ---------------------------------------------------------------- equivalence

def _residual(lhs: float, rhs: float) -> float:
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale if scale else math.inf


def equivalence_check(a: ks.CovarianceModel, b: ks.CovarianceModel, d: int) -> EquivalenceResult:
    if d not in (1, 2, 3):
        raise DimensionOutOfRange(f"equivalence conditions are implemented for d in 1..3 (d={d})")
    if not isinstance(a.kernel, ks.Matern) and isinstance(b.kernel, ks.Matern):
        a, b = b, a
    if not isinstance(a.kernel, ks.Matern):
        raise UnsupportedPair(f"equivalence of {a.kernel.family} and {b.kernel.family} is not covered")

    m = a.kernel
    lhs = a.sigma2 * m.alpha ** (-2 * m.nu)
    other = b.kernel
    if isinstance(other, ks.Matern):
        residual = _residual(lhs, microergodic(b))
        side = abs(other.nu - m.nu) <= 1e-12
        return EquivalenceResult(side and residual < _EQUIVALENCE_TOL, residual, "matern-matern")
    if isinstance(other, (ks.GenWendland, ks.GenWendlandRescaled)):
        beta = ks.support_radius(other)
        kappa, mu = other.kappa, other.mu
        rhs = math.exp(math.lgamma(2 * kappa + mu + 1) - math.lgamma(mu)) * b.sigma2 * beta ** (-(1 + 2 * kappa))
        residual = _residual(lhs, rhs)
        side = abs(m.nu - (kappa + 0.5)) <= 1e-12 and mu > d + kappa + 0.5
        return EquivalenceResult(side and residual < _EQUIVALENCE_TOL, residual, "matern-genwendland")
    if isinstance(other, ks.ConfluentHypergeometric):
        nu, eta = other.nu, other.eta
        rhs = math.exp(math.lgamma(nu + eta) - math.lgamma(eta)) * b.sigma2 * (other.beta**2 / 2) ** (-nu)
        residual = _residual(lhs, rhs)
        side = abs(m.nu - nu) <= 1e-12 and eta >= d / 2
        return EquivalenceResult(side and residual < _EQUIVALENCE_TOL, residual, "matern-confluent")
    raise UnsupportedPair(f"equivalence of Matern and {other.family} is not covered")


# ---------------------------------------------------------------- misspecification

def misspecified_mse(
    true_model: ks.CovarianceModel,
    working_model: ks.CovarianceModel,
    sites: la.SiteSet,
    x0: Any,
) -> MisspecifiedMse:
    target = _targets(x0, sites.d)
    k0 = float(_prior_variances(true_model, target)[0])
    k1 = float(_prior_variances(working_model, target)[0])
    if sites.n == 0:
        return MisspecifiedMse(k0, k0, 1.0, k1, k1 / k0)

    chol0, w0 = _weights(true_model, sites, target)
    chol1, w1 = _weights(working_model, sites, target)
    c0 = ks.covariance_block(true_model, sites.points, target)[:, 0]
    lam1 = la.solve_upper(chol1, w1[:, 0])
    sigma0 = la.build_cov_matrix(true_model, sites).entries

    mse_working = max(k0 - 2.0 * float(lam1 @ c0) + float(lam1 @ sigma0 @ lam1), 0.0)
    mse_oracle = max(k0 - float(w0[:, 0] @ w0[:, 0]), 0.0)
    believed = max(k1 - float(w1[:, 0] @ w1[:, 0]), 0.0)
    ratio_eff = mse_working / mse_oracle if mse_oracle > 0 else 1.0
    ratio_var = believed / mse_working if mse_working > 0 else 1.0
    return MisspecifiedMse(mse_working, mse_oracle, ratio_eff, believed, ratio_var)


def misspecified_refinement(
    true_model: ks.CovarianceModel,
    working_model: ks.CovarianceModel,
    n_list: Sequence[int],
    d: int,
    x0: Any,
) -> list[tuple[int, MisspecifiedMse]]:
    """Both prediction ratios on [0, 1]^d grids of increasing density."""
    rows = []
    for n in n_list:
        per_axis = round(n ** (1.0 / d))
        if per_axis < 2:
            raise DomainError(f"grid size {n} too small for d={d}")
        sites = la.grid_sites(1.0 / (per_axis - 1), d)
        result = misspecified_mse(true_model, working_model, sites, x0)
        logger.info("Misspecification n=%s ratio_eff=%.6f ratio_var=%.6f", sites.n, result.ratio_efficiency, result.ratio_variance_assessment)
        rows.append((sites.n, result))
    return rows

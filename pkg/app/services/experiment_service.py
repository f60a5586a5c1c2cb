from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np
from scipy import linalg as sla

from app.core.errors import ConfigError, DegenerateDesign, DomainError, EmptyNearSet, MaternLabError
from app.services import gp_service as gp
from app.services import kernel_service as ks
from app.services import linalg_service as la
from app.services.parallel_service import ParallelMap, SerialMap, derive_rng

logger = logging.getLogger(__name__)

STEIN_DIRECTIONS = 32
STEIN_RADII = 8
_START_STREAM = 1


@dataclass(frozen=True)
class ScreeningRow:
    epsilon: float
    n_near: int
    n_far: int
    ratio: float


@dataclass(frozen=True)
class FourierRow:
    z: float
    radial_fourier: float
    spectral_density: float
    rel_error: float


@dataclass(frozen=True)
class LimitRow:
    limit: str
    parameter: float
    sup_distance: float


@dataclass(frozen=True)
class McRow:
    rep: int
    n: int
    micro_hat: float
    standardized_stat: float


@dataclass(frozen=True)
class McSummary:
    n: int
    ok: int
    failed: int
    mean_abs_rel_error_micro: float
    standardized_mean: float
    standardized_sd: float


# ---------------------------------------------------------------- sparsity

def sparsity_cell(kappa: float, mu: float, target_range: float, spacing: float, epsilon: float = 1e-8) -> la.SparsityReport:
    """One table cell: GW-tilde (or Matern when mu is infinite) on the unit-square grid."""
    started = time.perf_counter()
    d = 2
    beta = ks.solve_scale_for_range(ks.Matern(kappa + 0.5, 1.0), d, target_range)
    kernel = ks.GenWendlandRescaled(kappa, mu, beta)
    ks.ensure_valid(kernel, d)
    family = "Matern" if math.isinf(mu) else "GenWendlandRescaled"
    radius = ks.gw_support_radius(kappa, mu, beta)

    sites = la.grid_sites(spacing, d)
    cov = la.build_cov_matrix(ks.CovarianceModel(kernel, 1.0), sites)
    pct_zero = la.quasi_sparsity(cov, 0.0)
    precision = la.invert_spd(la.cholesky(cov))
    pct_prec = la.quasi_sparsity(precision, epsilon)
    prec_factor = la.cholesky(precision)
    pct_chol = la.quasi_sparsity(prec_factor.L.T, epsilon)

    logger.info(
        "Sparsity cell kappa=%s mu=%s n=%s beta=%.5f C=%.4f done in %.2fs",
        kappa, mu, sites.n, beta, radius, time.perf_counter() - started,
    )
    return la.SparsityReport(
        family=family,
        kappa=float(kappa),
        mu=float(mu),
        C=radius,
        n=sites.n,
        pct_zero_cov=pct_zero,
        pct_quasi_prec=pct_prec,
        pct_quasi_chol=pct_chol,
        epsilon=float(epsilon),
    )


def sparsity_table(
    kappa_list: Sequence[float],
    mu_list: Sequence[float],
    target_range: float,
    spacing_list: Sequence[float],
    epsilon: float = 1e-8,
    pmap: ParallelMap | None = None,
) -> list[la.SparsityReport]:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive (epsilon={epsilon})")
    cells = list(itertools.product(spacing_list, kappa_list, mu_list))
    if not cells:
        raise ConfigError("sparsity needs nonempty kappa, mu and spacing lists")
    return (pmap or SerialMap()).map(
        lambda cell: sparsity_cell(cell[1], cell[2], target_range, cell[0], epsilon),
        cells,
    )


# ---------------------------------------------------------------- screening

def screening_design(d: int, epsilon: float, offset: Sequence[float], window: float, truncation: float) -> tuple[np.ndarray, np.ndarray]:
    """Near and far lattice points epsilon (offset + j); the predictand sits at the origin."""
    offset = np.asarray(offset, dtype=float).reshape(-1)
    if offset.size != d:
        raise DomainError(f"offset must have {d} coordinates (got {offset.size})")
    if np.all(offset == np.round(offset)):
        raise DomainError("offset must not lie on the integer lattice")
    reach = int(math.ceil(truncation / epsilon + np.max(np.abs(offset)))) + 1
    axis = np.arange(-reach, reach + 1)
    js = np.stack([m.reshape(-1) for m in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    lattice = js + offset
    points = epsilon * lattice
    in_region = np.all(np.abs(points) <= truncation + 1e-12, axis=1)
    near_mask = np.linalg.norm(lattice, axis=1) <= window
    near = points[near_mask]
    far = points[in_region & ~near_mask]
    return near, far


def screening_ratio(
    model: ks.CovarianceModel,
    d: int,
    epsilon_list: Sequence[float],
    offset: Sequence[float],
    window: float = 2.0,
    truncation: float = 1.0,
) -> list[ScreeningRow]:
    origin = np.zeros((1, d))
    rows: list[ScreeningRow] = []
    for epsilon in epsilon_list:
        if not epsilon > 0:
            raise DomainError(f"lattice spacing must be positive (epsilon={epsilon})")
        near, far = screening_design(d, epsilon, offset, window, truncation)
        if near.shape[0] == 0:
            raise EmptyNearSet(f"no lattice point within window {window} at epsilon={epsilon}")
        if far.shape[0] == 0:
            rows.append(ScreeningRow(float(epsilon), near.shape[0], 0, 1.0))
            continue
        near_var = gp.kriging_variance(model, la.make_sites(near), origin)
        full_var = gp.kriging_variance(model, la.make_sites(np.vstack([near, far])), origin)
        ratio = min(full_var / near_var, 1.0)
        logger.debug("Screening eps=%s near=%s far=%s ratio=%.12f", epsilon, near.shape[0], far.shape[0], ratio)
        rows.append(ScreeningRow(float(epsilon), near.shape[0], far.shape[0], ratio))
    return rows


# ---------------------------------------------------------------- spectra

def _stein_offsets(d: int, radius: float) -> np.ndarray:
    radii = radius * np.arange(1, STEIN_RADII + 1) / (STEIN_RADII + 1)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        angles = 2.0 * math.pi * np.arange(STEIN_DIRECTIONS) / STEIN_DIRECTIONS
        dirs = np.zeros((STEIN_DIRECTIONS, d))
        dirs[:, 0] = np.cos(angles)
        dirs[:, 1] = np.sin(angles)
    return np.vstack([np.zeros((1, d))] + [r * dirs for r in radii])


def stein_hypothesis_check(spec: ks.KernelSpec, d: int, radius: float, omega_magnitudes: Sequence[float]) -> list[float]:
    """sup over ||tau|| < radius of |f(omega + tau) / f(omega) - 1| for omega along the first axis."""
    if not radius >= 0:
        raise DomainError(f"radius must be >= 0 (radius={radius})")
    offsets = _stein_offsets(d, radius) if radius > 0 else np.zeros((1, d))
    sups = []
    for magnitude in omega_magnitudes:
        omega = np.zeros(d)
        omega[0] = magnitude
        base = ks.spectral_density(spec, d, float(magnitude))
        shifted = np.linalg.norm(omega + offsets, axis=1)
        ratios = np.array([ks.spectral_density(spec, d, float(z)) for z in shifted]) / base
        sups.append(float(np.max(np.abs(ratios - 1.0))))
    return sups


def fourier_consistency(spec: ks.KernelSpec, d: int, z_grid: Sequence[float]) -> tuple[list[FourierRow], float]:
    rows = []
    for z in z_grid:
        numeric = ks.radial_fourier(spec, d, float(z))
        exact = ks.spectral_density(spec, d, float(z))
        rows.append(FourierRow(float(z), numeric, exact, abs(numeric - exact) / exact))
    worst = max((row.rel_error for row in rows), default=0.0)
    logger.info("Fourier consistency family=%s d=%s points=%s max_rel_error=%.3e", spec.family, d, len(rows), worst)
    return rows, worst


# ---------------------------------------------------------------- limits

def kernel_limit_suite(grid: Sequence[float] | None = None, pmap: ParallelMap | None = None) -> list[LimitRow]:
    """Sup distances along the documented kernel limits, on x in [0, 3] unless a grid is given."""
    x = np.linspace(0.0, 3.0, 301) if grid is None else np.asarray(grid, dtype=float)
    alpha = 1.0
    cases: list[tuple[str, float, ks.KernelSpec, ks.KernelSpec, int]] = []
    for mu in (1e2, 1e3, 1e4):
        cases.append(("gw_rescaled_to_matern", mu, ks.GenWendlandRescaled(1.0, mu, alpha), ks.Matern(1.5, alpha), 1))
    for eta in (1e2, 1e3, 1e4):
        beta = 2.0 * math.sqrt(1.5 * (eta + 1.0)) * alpha
        cases.append(("confluent_to_matern", eta, ks.ConfluentHypergeometric(1.5, eta, beta), ks.Matern(1.5, alpha), 1))
    for nu in (1e2, 1e4, 1e6):
        cases.append(("matern_to_gaussian", nu, ks.Matern(nu, alpha / (2.0 * math.sqrt(nu))), ks.GaussianKernel(alpha), 1))
    for t in (10.0, 100.0, 1000.0):
        gh = ks.GaussHypergeometric(2.0, t, t, 2.0 * alpha * t, 1)
        cases.append(("gauss_hypergeometric_to_matern", t, gh, ks.Matern(1.5, alpha), 1))
    cases.append(("gauss_hypergeometric_to_genwendland", 1.0, *gh_matching_gw(1.0, 4.0, 1.0, 1), 1))

    def run(case: tuple[str, float, ks.KernelSpec, ks.KernelSpec, int]) -> LimitRow:
        name, parameter, a, b, d = case
        distance = ks.kernel_sup_distance(a, b, d, x)
        logger.info("Kernel limit %s parameter=%g sup=%.3e", name, parameter, distance)
        return LimitRow(name, parameter, distance)

    return (pmap or SerialMap()).map(run, cases)


def gh_matching_gw(kappa: float, mu: float, beta: float, d: int) -> tuple[ks.GaussHypergeometric, ks.GenWendland]:
    """The GH parameters that reproduce GenWendland(kappa, mu, beta) exactly in dimension d."""
    gh = ks.GaussHypergeometric(
        kappa=(d + 1) / 2 + kappa,
        delta=(d + mu + 1) / 2 + kappa,
        gamma_p=(d + mu) / 2 + 1 + kappa,
        beta=beta,
        d_ref=d,
    )
    return gh, ks.GenWendland(kappa, mu, beta)


# ---------------------------------------------------------------- monte carlo

def mc_design(n: int, d: int) -> la.SiteSet:
    if d == 1:
        return la.make_sites(np.linspace(0.0, 1.0, n))
    per_axis = round(n ** (1.0 / d))
    if per_axis < 2:
        raise DomainError(f"design size {n} too small for d={d}")
    return la.grid_sites(1.0 / (per_axis - 1), d)


def ml_microergodic_mc(
    true_model: ks.CovarianceModel,
    d: int,
    n_list: Sequence[int],
    reps: int,
    seed: int,
    pmap: ParallelMap | None = None,
    starts: int = 1,
    init: ks.KernelSpec | None = None,
    start_spread: float = 0.5,
) -> tuple[list[McRow], list[McSummary]]:
    """Fit every replicate from `init`, or from the true scale perturbed by a log-normal draw per replicate."""
    if reps < 1:
        raise ConfigError("reps must be positive")
    if d not in (1, 2, 3):
        raise DomainError(f"d must be 1, 2 or 3 (d={d})")
    scale = true_model.kernel.scale_field
    if scale is None:
        raise ConfigError(f"{true_model.kernel.family} has no scale parameter to fit")
    if start_spread < 0:
        raise ConfigError(f"start_spread must be >= 0 (start_spread={start_spread})")
    if init is not None and type(init) is not type(true_model.kernel):
        raise ConfigError(f"init family {init.family} differs from {true_model.kernel.family}")
    micro0 = gp.microergodic(true_model)
    true_scale = float(getattr(true_model.kernel, scale))
    pmap = pmap or SerialMap()

    rows: list[McRow] = []
    summaries: list[McSummary] = []
    for n_index, n in enumerate(n_list):
        sites = mc_design(int(n), d)
        datasets = gp.simulate(true_model, sites, seed, reps, stream=(n_index,))

        def start_for(rep: int) -> ks.KernelSpec:
            if init is not None:
                return init
            jump = derive_rng(seed, n_index, rep, _START_STREAM).normal(0.0, start_spread)
            return replace(true_model.kernel, **{scale: true_scale * math.exp(jump)})

        def fit_one(data: gp.GpDataset) -> float:
            try:
                return gp.fit_ml(start_for(data.replicate), data, [scale], starts=starts, seed=seed).micro_hat
            except MaternLabError as exc:
                logger.warning("MC fit failed n=%s rep=%s err=%s", sites.n, data.replicate, exc)
                return math.nan

        micro_hats = pmap.map(fit_one, datasets)
        ok_stats = []
        abs_errors = []
        for rep, micro_hat in enumerate(micro_hats):
            stat = math.sqrt(sites.n) * (micro_hat - micro0) / (math.sqrt(2.0) * micro0)
            rows.append(McRow(rep, sites.n, micro_hat, stat))
            if math.isfinite(micro_hat):
                ok_stats.append(stat)
                abs_errors.append(abs(micro_hat - micro0) / micro0)
        ok = len(ok_stats)
        summary = McSummary(
            n=sites.n,
            ok=ok,
            failed=len(micro_hats) - ok,
            mean_abs_rel_error_micro=float(np.mean(abs_errors)) if ok else math.nan,
            standardized_mean=float(np.mean(ok_stats)) if ok else math.nan,
            standardized_sd=float(np.std(ok_stats, ddof=1)) if ok > 1 else 0.0,
        )
        logger.info(
            "MC n=%s ok=%s failed=%s mare=%.4f mean=%.4f sd=%.4f",
            summary.n, summary.ok, summary.failed,
            summary.mean_abs_rel_error_micro, summary.standardized_mean, summary.standardized_sd,
        )
        summaries.append(summary)
    return rows, summaries


# ---------------------------------------------------------------- polyharmonic

def _monomials(degree: int, d: int) -> list[tuple[int, ...]]:
    return [p for p in itertools.product(range(degree + 1), repeat=d) if sum(p) <= degree]


def _poly_block(points: np.ndarray, exponents: list[tuple[int, ...]]) -> np.ndarray:
    return np.stack([np.prod(points ** np.asarray(e), axis=1) for e in exponents], axis=1)


def polyharmonic_predict(nu: float, points: np.ndarray, values: np.ndarray, x0: np.ndarray, scale: float = 1.0) -> float:
    d = points.shape[1]
    degree = int(math.floor(nu - d / 2))
    exponents = _monomials(degree, d) if degree >= 0 else []
    n, q = points.shape[0], len(exponents)

    kernel_block = ks.polyharmonic_array(nu, d, la.pdist_matrix(points) / scale)
    system = np.zeros((n + q, n + q))
    system[:n, :n] = kernel_block
    if q:
        poly = _poly_block(points, exponents)
        if np.linalg.matrix_rank(poly) < q:
            raise DegenerateDesign(f"sites do not determine polynomials of degree {degree} in d={d}")
        system[:n, n:] = poly
        system[n:, :n] = poly.T
    rhs = np.concatenate([values, np.zeros(q)])
    try:
        coef = sla.solve(system, rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesign("polyharmonic saddle system is singular") from exc

    dist = np.linalg.norm(points - x0, axis=1) / scale
    value = float(ks.polyharmonic_array(nu, d, dist) @ coef[:n])
    if q:
        value += float(_poly_block(x0[None, :], exponents)[0] @ coef[n:])
    return value


def polyharmonic_scale_invariance(
    nu: float,
    d: int,
    sites: la.SiteSet,
    values: Any,
    x0: Any,
    scale_list: Sequence[float],
) -> float:
    if sites.d != d:
        raise DomainError(f"sites have dimension {sites.d}, expected {d}")
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size != sites.n:
        raise DomainError(f"{values.size} values for {sites.n} sites")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if any(not s > 0 for s in scale_list):
        raise DomainError("scales must be positive")
    reference = polyharmonic_predict(nu, sites.points, values, x0, 1.0)
    spread = 0.0
    for scale in scale_list:
        predicted = polyharmonic_predict(nu, sites.points, values, x0, float(scale))
        spread = max(spread, abs(predicted - reference))
    return spread

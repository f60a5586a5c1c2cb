from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, ClassVar

import numpy as np
from scipy import integrate, optimize
from scipy import linalg as sla
from scipy.spatial.distance import cdist

from app.core.errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    NotPositiveDefinite,
    QuadratureError,
    UnsupportedFamily,
    ValidationError,
)
from app.services import specfun_service as sf

logger = logging.getLogger(__name__)

_HALF_INTEGER_TOL = 1e-9
_HALF_INTEGER_MAX_K = 50
_LN2 = math.log(2.0)


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class KernelSpec:
    family: ClassVar[str] = ""
    scale_field: ClassVar[str | None] = None


@dataclass(frozen=True)
class Matern(KernelSpec):
    nu: float
    alpha: float
    family: ClassVar[str] = "Matern"
    scale_field: ClassVar[str | None] = "alpha"


@dataclass(frozen=True)
class GaussianKernel(KernelSpec):
    alpha: float
    family: ClassVar[str] = "GaussianKernel"
    scale_field: ClassVar[str | None] = "alpha"


@dataclass(frozen=True)
class Askey(KernelSpec):
    mu: float
    beta: float
    family: ClassVar[str] = "Askey"
    scale_field: ClassVar[str | None] = "beta"


@dataclass(frozen=True)
class GenWendland(KernelSpec):
    kappa: float
    mu: float
    beta: float
    family: ClassVar[str] = "GenWendland"
    scale_field: ClassVar[str | None] = "beta"


@dataclass(frozen=True)
class GenWendlandRescaled(KernelSpec):
    """GW with support stretched to gw_support_radius(kappa, mu, beta); tends to Matern(kappa+1/2, beta)."""

    kappa: float
    mu: float
    beta: float
    family: ClassVar[str] = "GenWendlandRescaled"
    scale_field: ClassVar[str | None] = "beta"


@dataclass(frozen=True)
class GaussHypergeometric(KernelSpec):
    kappa: float
    delta: float
    gamma_p: float
    beta: float
    d_ref: int
    family: ClassVar[str] = "GaussHypergeometric"
    scale_field: ClassVar[str | None] = "beta"


@dataclass(frozen=True)
class ConfluentHypergeometric(KernelSpec):
    nu: float
    eta: float
    beta: float
    family: ClassVar[str] = "ConfluentHypergeometric"
    scale_field: ClassVar[str | None] = "beta"


@dataclass(frozen=True)
class Polyharmonic(KernelSpec):
    nu: float
    d_ref: int
    family: ClassVar[str] = "Polyharmonic"


@dataclass(frozen=True)
class Tapered(KernelSpec):
    base: KernelSpec
    taper: KernelSpec
    family: ClassVar[str] = "Tapered"


@dataclass(frozen=True)
class SpaceTimeGneiting(KernelSpec):
    """Matern in space with temporal lag entering through psi(t) = (1 + psi_a t)^psi_lambda.

    As a purely spatial correlation it is the u = 0 margin; covariance_block reads
    the last coordinate of each site as time.
    """

    nu: float
    alpha: float
    psi_a: float
    psi_lambda: float
    family: ClassVar[str] = "SpaceTimeGneiting"
    scale_field: ClassVar[str | None] = "alpha"


@dataclass(frozen=True)
class PaciorekNS(KernelSpec):
    nu: float
    alpha: float
    anisotropy_field: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    family: ClassVar[str] = "PaciorekNS"


@dataclass(frozen=True)
class CovarianceModel:
    kernel: KernelSpec
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma2 > 0 or math.isinf(self.sigma2):
            raise DomainError(f"sigma2 > 0 required (sigma2={self.sigma2})")


@dataclass(frozen=True)
class StateSpaceModel:
    drift: np.ndarray
    noise_intensity: float
    stationary_cov: np.ndarray


FAMILIES: dict[str, type[KernelSpec]] = {
    cls.family: cls
    for cls in (
        Matern,
        GaussianKernel,
        Askey,
        GenWendland,
        GenWendlandRescaled,
        GaussHypergeometric,
        ConfluentHypergeometric,
        Polyharmonic,
        Tapered,
        SpaceTimeGneiting,
        PaciorekNS,
    )
}


# ---------------------------------------------------------------- validation

def _fmt(value: float) -> str:
    return f"{value:g}"


def validate(spec: KernelSpec, d: int) -> list[str]:
    violations: list[str] = []

    def need(condition: bool, message: str) -> None:
        if not condition:
            violations.append(message)

    def positive(name: str, allow_inf: bool = False) -> None:
        value = getattr(spec, name)
        finite = math.isfinite(value) or (allow_inf and value == math.inf)
        need(value > 0 and finite, f"{name} > 0 required ({name}={_fmt(value)})")

    if int(d) != d or d < 1:
        return [f"d >= 1 required (d={d})"]

    if isinstance(spec, Matern):
        positive("nu")
        positive("alpha")
    elif isinstance(spec, GaussianKernel):
        positive("alpha")
    elif isinstance(spec, Askey):
        positive("mu")
        positive("beta")
        need(spec.mu >= (d + 1) / 2, f"mu >= (d+1)/2 required (mu={_fmt(spec.mu)}, d={d})")
    elif isinstance(spec, (GenWendland, GenWendlandRescaled)):
        need(spec.kappa >= 0 and math.isfinite(spec.kappa), f"kappa >= 0 required (kappa={_fmt(spec.kappa)})")
        # mu = inf on the rescaled family is its Matern limit
        positive("mu", allow_inf=isinstance(spec, GenWendlandRescaled))
        positive("beta")
        need(
            spec.mu >= (d + 1) / 2 + spec.kappa,
            f"mu >= (d+1)/2 + kappa required (mu={_fmt(spec.mu)}, kappa={_fmt(spec.kappa)}, d={d})",
        )
    elif isinstance(spec, GaussHypergeometric):
        for name in ("kappa", "delta", "gamma_p", "beta"):
            positive(name)
        need(spec.d_ref == d, f"GaussHypergeometric built for d_ref={spec.d_ref} used in d={d}")
        k, de, ga = spec.kappa, spec.delta, spec.gamma_p
        need(k > d / 2, f"kappa > d/2 required (kappa={_fmt(k)}, d={d})")
        need(2 * (de - k) * (ga - k) >= k, f"2(delta-kappa)(gamma-kappa) >= kappa required (got {_fmt(2 * (de - k) * (ga - k))})")
        need(2 * (de + ga) >= 6 * k + 1, f"2(delta+gamma) >= 6 kappa + 1 required (got {_fmt(2 * (de + ga))} < {_fmt(6 * k + 1)})")
    elif isinstance(spec, ConfluentHypergeometric):
        positive("nu")
        positive("eta")
        positive("beta")
    elif isinstance(spec, Polyharmonic):
        need(spec.d_ref == d, f"Polyharmonic built for d_ref={spec.d_ref} used in d={d}")
        need(2 * spec.nu - d > 0, f"2 nu - d > 0 required (nu={_fmt(spec.nu)}, d={d})")
    elif isinstance(spec, Tapered):
        violations.extend(f"base: {v}" for v in validate(spec.base, d))
        violations.extend(f"taper: {v}" for v in validate(spec.taper, d))
        need(math.isfinite(support_radius(spec.taper)), "taper must have compact support")
    elif isinstance(spec, SpaceTimeGneiting):
        positive("nu")
        positive("alpha")
        positive("psi_a")
        need(0 < spec.psi_lambda <= 1, f"psi_lambda in (0, 1] required (psi_lambda={_fmt(spec.psi_lambda)})")
    elif isinstance(spec, PaciorekNS):
        positive("nu")
        positive("alpha")
        need(callable(spec.anisotropy_field), "anisotropy_field must be callable")
    else:
        violations.append(f"unknown kernel family {type(spec).__name__}")
    return violations


def ensure_valid(spec: KernelSpec, d: int) -> None:
    violations = validate(spec, d)
    if violations:
        raise ValidationError(violations)


def support_radius(spec: KernelSpec) -> float:
    if isinstance(spec, Askey):
        return spec.beta
    if isinstance(spec, GenWendland):
        return spec.beta
    if isinstance(spec, GenWendlandRescaled):
        return gw_support_radius(spec.kappa, spec.mu, spec.beta)
    if isinstance(spec, GaussHypergeometric):
        return spec.beta
    if isinstance(spec, Tapered):
        return min(support_radius(spec.base), support_radius(spec.taper))
    return math.inf


def gw_support_radius(kappa: float, mu: float, beta: float) -> float:
    if kappa < 0 or not mu > 0 or not beta > 0:
        raise DomainError(f"gw_support_radius needs kappa >= 0, mu > 0, beta > 0 (kappa={kappa}, mu={mu}, beta={beta})")
    if math.isinf(mu):
        return math.inf
    return beta * math.exp((math.lgamma(mu + 2 * kappa + 1) - math.lgamma(mu)) / (1 + 2 * kappa))


# ---------------------------------------------------------------- scalar families

def _matern_half_integer_coefs(k: int) -> list[float]:
    # highest power first, ready for np.polyval
    return [
        math.exp(math.lgamma(k + i + 1) - math.lgamma(2 * k + 1)) * sf.binom(k, i) * 2.0 ** (k - i)
        for i in range(k + 1)
    ]


def _half_integer_k(nu: float) -> int | None:
    k = round(nu - 0.5)
    if 0 <= k <= _HALF_INTEGER_MAX_K and abs(nu - 0.5 - k) < _HALF_INTEGER_TOL:
        return int(k)
    return None


def matern_correlation(nu: float, alpha: float, x: float, closed_form: bool = True) -> float:
    t = x / alpha
    if t == 0.0:
        return 1.0
    k = _half_integer_k(nu) if closed_form else None
    if k is not None:
        return math.exp(-t) * float(np.polyval(_matern_half_integer_coefs(k), t))
    log_value = (1.0 - nu) * _LN2 - math.lgamma(nu) + nu * math.log(t) + sf.log_bessel_k(nu, t)
    return min(1.0, sf.exp_clamped(log_value))


def _gw_closed(kappa: int, mu: float, r: np.ndarray | float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    base = np.clip(1.0 - r, 0.0, None)
    if kappa == 0:
        poly = np.ones_like(r)
    elif kappa == 1:
        poly = 1.0 + (mu + 1.0) * r
    else:
        poly = 1.0 + (mu + 2.0) * r + ((mu + 2.0) ** 2 - 1.0) / 3.0 * r * r
    return np.where(r < 1.0, base ** (mu + kappa) * poly, 0.0)


def gw_correlation(kappa: float, mu: float, beta: float, x: float, closed_form: bool = True) -> float:
    """GW_{kappa,mu,beta}(x); closed forms for kappa in {0, 1, 2}, 2F1 representation otherwise."""
    if x >= beta:
        return 0.0
    if kappa == 0.0 or (closed_form and kappa in (1.0, 2.0)):
        return float(_gw_closed(int(kappa), mu, x / beta))
    r2 = (x / beta) ** 2
    if r2 == 0.0:
        return 1.0
    log_prefactor = (
        math.lgamma(kappa)
        + math.lgamma(2 * kappa + mu + 1)
        - math.lgamma(2 * kappa)
        - math.lgamma(kappa + mu + 1)
        - (mu + 1) * _LN2
    )
    log_power = (kappa + mu) * math.log1p(-r2)
    value = sf.hyp2f1_scaled_complement(mu / 2, (mu + 1) / 2, kappa + mu + 1, r2, log_prefactor + log_power)
    return min(1.0, max(0.0, value))


def _gh_correlation(spec: GaussHypergeometric, x: float) -> float:
    if x >= spec.beta:
        return 0.0
    half_d = spec.d_ref / 2
    a = spec.delta - spec.kappa
    b = spec.gamma_p - spec.kappa
    c = a + spec.gamma_p - half_d
    r2 = (x / spec.beta) ** 2
    if r2 == 0.0:
        return 1.0
    log_prefactor = (
        math.lgamma(spec.delta - half_d)
        + math.lgamma(spec.gamma_p - half_d)
        - math.lgamma(c)
        - math.lgamma(spec.kappa - half_d)
    )
    # exponent c - 1 gives GH(0) = 1 and the exact reduction to GW
    log_power = (c - 1.0) * math.log1p(-r2)
    value = sf.hyp2f1_scaled_complement(a, b, c, r2, log_prefactor + log_power)
    return min(1.0, max(0.0, value))


def _ch_correlation(spec: ConfluentHypergeometric, x: float) -> float:
    if x == 0.0:
        return 1.0
    z = spec.nu * (x / spec.beta) ** 2
    log_prefactor = math.lgamma(spec.nu + spec.eta) - math.lgamma(spec.nu)
    return min(1.0, sf.tricomi_u_scaled(spec.eta, 1.0 - spec.nu, z, log_prefactor))


def _corr_scalar(spec: KernelSpec, d: int, x: float) -> float:
    if isinstance(spec, Matern):
        return matern_correlation(spec.nu, spec.alpha, x)
    if isinstance(spec, GaussianKernel):
        return math.exp(-((x / spec.alpha) ** 2))
    if isinstance(spec, Askey):
        return (1.0 - x / spec.beta) ** spec.mu if x < spec.beta else 0.0
    if isinstance(spec, GenWendland):
        return gw_correlation(spec.kappa, spec.mu, spec.beta, x)
    if isinstance(spec, GenWendlandRescaled):
        if math.isinf(spec.mu):
            return matern_correlation(spec.kappa + 0.5, spec.beta, x)
        return gw_correlation(spec.kappa, spec.mu, gw_support_radius(spec.kappa, spec.mu, spec.beta), x)
    if isinstance(spec, GaussHypergeometric):
        return _gh_correlation(spec, x)
    if isinstance(spec, ConfluentHypergeometric):
        return _ch_correlation(spec, x)
    if isinstance(spec, Tapered):
        return _corr_scalar(spec.base, d, x) * _corr_scalar(spec.taper, d, x)
    if isinstance(spec, SpaceTimeGneiting):
        return matern_correlation(spec.nu, spec.alpha, x)
    if isinstance(spec, Polyharmonic):
        raise UnsupportedFamily("Polyharmonic is conditionally positive definite; use polyharmonic_value")
    raise UnsupportedFamily(f"{spec.family} correlation depends on locations; use covariance_block")


def correlation(spec: KernelSpec, d: int, x: float) -> float:
    ensure_valid(spec, d)
    if not x >= 0:
        raise DomainError(f"distance must be >= 0 (x={x})")
    return _corr_scalar(spec, d, float(x))


# ---------------------------------------------------------------- vectorized families

def _corr_vectorized(spec: KernelSpec, x: np.ndarray) -> np.ndarray | None:
    if isinstance(spec, (Matern, SpaceTimeGneiting)):
        k = _half_integer_k(spec.nu)
        if k is None:
            return None
        t = x / spec.alpha
        return np.exp(-t) * np.polyval(_matern_half_integer_coefs(k), t)
    if isinstance(spec, GaussianKernel):
        return np.exp(-((x / spec.alpha) ** 2))
    if isinstance(spec, Askey):
        return np.where(x < spec.beta, np.clip(1.0 - x / spec.beta, 0.0, None) ** spec.mu, 0.0)
    if isinstance(spec, (GenWendland, GenWendlandRescaled)) and spec.kappa in (0.0, 1.0, 2.0):
        if isinstance(spec, GenWendlandRescaled):
            if math.isinf(spec.mu):
                return _corr_vectorized(Matern(spec.kappa + 0.5, spec.beta), x)
            radius = gw_support_radius(spec.kappa, spec.mu, spec.beta)
        else:
            radius = spec.beta
        return _gw_closed(int(spec.kappa), spec.mu, x / radius)
    return None


def _corr_array(spec: KernelSpec, d: int, x: np.ndarray) -> np.ndarray:
    if isinstance(spec, Tapered):
        return _corr_array(spec.base, d, x) * _corr_array(spec.taper, d, x)
    fast = _corr_vectorized(spec, x)
    if fast is not None:
        return fast
    unique, inverse = np.unique(x, return_inverse=True)
    values = np.fromiter((_corr_scalar(spec, d, float(v)) for v in unique), dtype=float, count=unique.size)
    return values[inverse].reshape(x.shape)


def correlation_array(spec: KernelSpec, d: int, x: Any) -> np.ndarray:
    """Correlation over an array of distances; repeated distances are evaluated once."""
    ensure_valid(spec, d)
    x = np.asarray(x, dtype=float)
    if x.size and not np.all(x >= 0):
        raise DomainError("distances must be >= 0")
    return _corr_array(spec, d, x)


# ---------------------------------------------------------------- location-based kernels

def polyharmonic_value(nu: float, d: int, x: float) -> float:
    power = 2 * nu - d
    if not power > 0:
        raise DomainError(f"polyharmonic kernel needs 2 nu - d > 0 (nu={nu}, d={d})")
    if not x >= 0:
        raise DomainError(f"distance must be >= 0 (x={x})")
    sign = -1.0 if (math.floor(nu - d / 2) + 1) % 2 else 1.0
    if x == 0.0:
        return 0.0
    if _is_even_integer(power):
        return sign * x**power * math.log(x)
    return sign * x**power


def _is_even_integer(value: float) -> bool:
    return abs(value - round(value)) < 1e-12 and round(value) % 2 == 0


def polyharmonic_array(nu: float, d: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    power = 2 * nu - d
    if not power > 0:
        raise DomainError(f"polyharmonic kernel needs 2 nu - d > 0 (nu={nu}, d={d})")
    sign = -1.0 if (math.floor(nu - d / 2) + 1) % 2 else 1.0
    safe = np.where(x > 0, x, 1.0)
    if _is_even_integer(power):
        values = safe**power * np.log(safe)
    else:
        values = safe**power
    return np.where(x > 0, sign * values, 0.0)


def spacetime_gneiting(nu: float, alpha: float, psi_a: float, psi_lambda: float, d: int, x: float, u: float) -> float:
    ensure_valid(SpaceTimeGneiting(nu, alpha, psi_a, psi_lambda), d)
    psi = (1.0 + psi_a * u * u) ** psi_lambda
    return matern_correlation(nu, alpha, x / psi) / psi


def _spd_logdet(matrix: np.ndarray) -> float:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"anisotropy matrix must be square (shape={matrix.shape})")
    if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=0.0):
        raise DomainError("anisotropy matrix must be symmetric")
    try:
        factor, lower = sla.cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("anisotropy matrix is not symmetric positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(factor))))


def paciorek_ns(
    nu: float,
    alpha: float,
    anisotropy_field: Callable[[np.ndarray], np.ndarray],
    x: Any,
    y: Any,
) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sx = np.atleast_2d(np.asarray(anisotropy_field(x), dtype=float))
    sy = np.atleast_2d(np.asarray(anisotropy_field(y), dtype=float))
    mid = 0.5 * (sx + sy)
    log_prefactor = 0.25 * (_spd_logdet(sx) + _spd_logdet(sy)) - 0.5 * _spd_logdet(mid)
    diff = x - y
    q = float(diff @ sla.cho_solve(sla.cho_factor(mid, lower=True), diff))
    return math.exp(log_prefactor) * matern_correlation(nu, alpha, math.sqrt(max(q, 0.0)))


def covariance_block(model: CovarianceModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sigma2 * K(a_i, b_j) for two point arrays of shape (n, d) and (m, d)."""
    kernel = model.kernel
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if isinstance(kernel, PaciorekNS):
        ensure_valid(kernel, a.shape[1])
        block = np.empty((a.shape[0], b.shape[0]))
        for i, xi in enumerate(a):
            for j, yj in enumerate(b):
                block[i, j] = paciorek_ns(kernel.nu, kernel.alpha, kernel.anisotropy_field, xi, yj)
        return model.sigma2 * block
    if isinstance(kernel, SpaceTimeGneiting):
        d = a.shape[1] - 1
        ensure_valid(kernel, d)
        h = cdist(a[:, :d], b[:, :d])
        u = np.abs(a[:, d][:, None] - b[:, d][None, :])
        psi = (1.0 + kernel.psi_a * u * u) ** kernel.psi_lambda
        spatial = _corr_array(Matern(kernel.nu, kernel.alpha), d, h / psi)
        return model.sigma2 * spatial / psi
    d = a.shape[1]
    return model.sigma2 * correlation_array(kernel, d, cdist(a, b))


# ---------------------------------------------------------------- spectra

def has_closed_form_spectrum(spec: KernelSpec) -> bool:
    return isinstance(spec, (Matern, GaussianKernel))


def spectral_density(spec: KernelSpec, d: int, z: float) -> float:
    ensure_valid(spec, d)
    if not z >= 0:
        raise DomainError(f"frequency must be >= 0 (z={z})")
    if isinstance(spec, Matern):
        nu, alpha = spec.nu, spec.alpha
        log_const = math.lgamma(nu + d / 2) - (d / 2) * math.log(math.pi) - math.lgamma(nu)
        return math.exp(log_const + d * math.log(alpha) - (nu + d / 2) * math.log1p((alpha * z) ** 2))
    if isinstance(spec, GaussianKernel):
        alpha = spec.alpha
        return alpha**d / (2**d * math.pi ** (d / 2)) * math.exp(-(alpha * z) ** 2 / 4)
    raise UnsupportedFamily(f"{spec.family} has no closed-form spectral density; use radial_fourier")


def _wynn_epsilon(partials: list[float]) -> tuple[float, float]:
    previous = [0.0] * (len(partials) + 1)
    current = list(partials)
    best, best_err = partials[-1], math.inf
    column = 0
    while len(current) > 2:
        following = []
        for i in range(len(current) - 1):
            diff = current[i + 1] - current[i]
            if diff == 0.0:
                return current[i + 1], 0.0
            following.append(previous[i + 1] + 1.0 / diff)
        previous, current = current, following
        column += 1
        if column % 2 == 0 and len(current) >= 2:
            err = abs(current[-1] - current[-2])
            if err < best_err:
                best, best_err = current[-1], err
    return best, best_err


def _quad(func: Callable[[float], float], lo: float, hi: float) -> float:
    result = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200, full_output=1)
    if not math.isfinite(result[0]):
        raise QuadratureError(f"non-finite panel integral on [{lo}, {hi}]")
    return result[0]


def hankel_transform(
    func: Callable[[float], float],
    d: int,
    z: float,
    support: float = math.inf,
    algebraic_tail: bool = False,
    tol: float = 1e-9,
    max_panels: int = 20_000,
) -> float:
    """z^(1-d/2) int_0^inf u^(d/2) J_{d/2-1}(uz) func(u) du, integrated panel by panel between Bessel zeros."""
    norm = 1.0 / (2.0 ** (d / 2 - 1) * math.gamma(d / 2))
    if z == 0.0:
        total = integrate.quad(lambda u: u ** (d - 1) * func(u), 0.0, support, epsabs=0.0, epsrel=1e-13, limit=400, full_output=1)
        return norm * total[0]

    def integrand(u: float) -> float:
        return u ** (d - 1) * sf.omega_d(d, u * z) * func(u)

    order = d / 2 - 1
    panels: list[float] = []
    partials: list[float] = []
    max_panel = 0.0
    lo = 0.0
    for k in range(1, max_panels + 1):
        hi = (k + order / 2 - 0.25) * math.pi / z
        last = hi >= support
        if last:
            hi = support
        value = _quad(integrand, lo, hi)
        panels.append(value)
        partials.append(math.fsum(panels))
        max_panel = max(max_panel, abs(value))
        if last:
            return norm * partials[-1]
        envelope = hi ** (d - 1) * abs(func(hi)) * (hi - lo)
        if not algebraic_tail and k > 3 and envelope <= 1e-17 * max_panel:
            return norm * partials[-1]
        if algebraic_tail and k >= 60 and k % 20 == 0:
            estimate, err = _wynn_epsilon(partials[-40:])
            if err <= tol:
                return norm * estimate
        lo = hi
    raise QuadratureError(f"hankel transform did not converge in {max_panels} panels (d={d}, z={z})")


def radial_fourier(spec: KernelSpec, d: int, z: float, tol: float = 1e-9) -> float:
    ensure_valid(spec, d)
    if not z >= 0:
        raise DomainError(f"frequency must be >= 0 (z={z})")
    tail = isinstance(spec, ConfluentHypergeometric)
    value = hankel_transform(lambda u: _corr_scalar(spec, d, u), d, z, support_radius(spec), tail, tol)
    return value / (2.0 * math.pi) ** (d / 2)


def inverse_radial_fourier(density: Callable[[float], float], d: int, x: float, tol: float = 1e-9) -> float:
    if not x >= 0:
        raise DomainError(f"distance must be >= 0 (x={x})")
    return (2.0 * math.pi) ** (d / 2) * hankel_transform(density, d, x, math.inf, True, tol)


# ---------------------------------------------------------------- ranges and limits

def practical_range(spec: KernelSpec, d: int, level: float = 0.05) -> float:
    ensure_valid(spec, d)
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1) (level={level})")

    def excess(x: float) -> float:
        return _corr_scalar(spec, d, x) - level

    hi = support_radius(spec)
    if math.isinf(hi):
        hi = 1.0
        while excess(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise BracketError(f"no practical range found for {spec.family}")
    lo = 0.0
    try:
        return float(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500))
    except ValueError as exc:
        raise BracketError(f"practical range bracket failed for {spec.family}: {exc}") from exc


def solve_scale_for_range(spec: KernelSpec, d: int, target_range: float, level: float = 0.05) -> float:
    """Scale parameter giving practical_range == target_range; the incoming scale value is ignored."""
    if spec.scale_field is None:
        raise UnsupportedFamily(f"{spec.family} has no scale parameter")
    if not target_range > 0:
        raise DomainError(f"target range must be positive (target_range={target_range})")
    unit = replace(spec, **{spec.scale_field: 1.0})
    return target_range / practical_range(unit, d, level)


def gw_rescaled_correlation(kappa: float, mu: float, beta: float, d: int, x: float) -> float:
    return correlation(GenWendlandRescaled(kappa, mu, beta), d, x)


def taper(base: KernelSpec, taper_spec: KernelSpec, d: int | None = None) -> Tapered:
    if math.isinf(support_radius(taper_spec)):
        raise ValidationError([f"taper must have compact support ({taper_spec.family} does not)"])
    result = Tapered(base, taper_spec)
    if d is not None:
        ensure_valid(result, d)
    return result


def kernel_sup_distance(a: KernelSpec, b: KernelSpec, d: int, grid: Any) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return 0.0
    return float(np.max(np.abs(correlation_array(a, d, grid) - correlation_array(b, d, grid))))


# ---------------------------------------------------------------- state space

def state_space_matern(k: int, alpha: float, sigma2: float) -> StateSpaceModel:
    if int(k) != k or k < 0:
        raise DomainError(f"k must be a nonnegative integer (k={k})")
    if not alpha > 0 or not sigma2 > 0:
        raise DomainError(f"alpha and sigma2 must be positive (alpha={alpha}, sigma2={sigma2})")
    k = int(k)
    size = k + 1
    coefs = [sf.binom(k + 1, i) * alpha ** (-(k + 1 - i)) for i in range(size)]
    drift = np.zeros((size, size))
    drift[np.arange(k), np.arange(1, size)] = 1.0
    drift[-1, :] = -np.asarray(coefs)
    noise = np.zeros((size, size))
    noise[-1, -1] = 1.0
    try:
        unit_cov = sla.solve_continuous_lyapunov(drift, -noise)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"Lyapunov solve failed for k={k}, alpha={alpha}") from exc
    q = sigma2 / unit_cov[0, 0]
    cov = q * unit_cov
    return StateSpaceModel(drift=drift, noise_intensity=float(q), stationary_cov=0.5 * (cov + cov.T))


def state_space_autocov(ssm: StateSpaceModel, h: float) -> float:
    if not h >= 0:
        raise DomainError(f"lag must be >= 0 (h={h})")
    return float((sla.expm(ssm.drift * h) @ ssm.stationary_cov)[0, 0])


# ---------------------------------------------------------------- json codec

def spec_to_json(spec: KernelSpec) -> dict[str, Any]:
    if isinstance(spec, PaciorekNS):
        raise ConfigError("PaciorekNS carries a callable anisotropy field and cannot be serialized")
    if isinstance(spec, Tapered):
        params: dict[str, Any] = {"base": spec_to_json(spec.base), "taper": spec_to_json(spec.taper)}
    else:
        params = {f.name: getattr(spec, f.name) for f in fields(spec)}
    return {"family": spec.family, "params": params}


def spec_from_json(obj: Any) -> KernelSpec:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("kernel must be an object with 'family' and 'params'")
    family = obj["family"]
    cls = FAMILIES.get(family)
    if cls is None:
        raise ConfigError(f"unknown kernel family {family!r} (known: {', '.join(sorted(FAMILIES))})")
    if cls is PaciorekNS:
        raise ConfigError("PaciorekNS cannot be built from JSON")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("kernel params must be an object")
    if cls is Tapered:
        if set(params) != {"base", "taper"}:
            raise ConfigError("Tapered params must be exactly 'base' and 'taper'")
        return Tapered(spec_from_json(params["base"]), spec_from_json(params["taper"]))

    names = [f.name for f in fields(cls)]
    unknown = sorted(set(params) - set(names))
    missing = [n for n in names if n not in params]
    if unknown:
        raise ConfigError(f"{family}: unknown parameter(s) {', '.join(unknown)}")
    if missing:
        raise ConfigError(f"{family}: missing parameter(s) {', '.join(missing)}")
    values: dict[str, Any] = {}
    for name in names:
        raw = params[name]
        try:
            values[name] = int(raw) if name == "d_ref" else float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{family}.{name} must be a number (got {raw!r})") from exc
    return cls(**values)


def model_to_json(model: CovarianceModel) -> dict[str, Any]:
    return {"kernel": spec_to_json(model.kernel), "sigma2": model.sigma2}


def model_from_json(obj: Any) -> CovarianceModel:
    if not isinstance(obj, dict) or "kernel" not in obj:
        raise ConfigError("model must be an object with 'kernel' and optional 'sigma2'")
    try:
        sigma2 = float(obj.get("sigma2", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sigma2 must be a number (got {obj.get('sigma2')!r})") from exc
    return CovarianceModel(spec_from_json(obj["kernel"]), sigma2)

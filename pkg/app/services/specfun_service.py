"""Special functions used by the kernel formulas.

Everything here is plain float arithmetic on scalars. Accuracy targets:

* ln_gamma: relative 1e-13 on [1e-3, 1e6] (delegates to the C library lgamma).
* bessel_k: relative 1e-10 for nu in [0, 50], x in [1e-8, 700].
* bessel_j: relative 1e-9 for nu in [0, 20], x in [0, 200] away from zeros.
* gauss_2f1: relative 1e-10 on z in [0, 1).
* kummer_m / tricomi_u: relative 1e-9 for the confluent-hypergeometric kernel range.

Values below the smallest normal float are returned as 0.0, never raised.
"""
from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass

from scipy import integrate

from app.core.errors import ConvergenceError, DomainError, QuadratureError

logger = logging.getLogger(__name__)

_LOG_TINY = math.log(sys.float_info.min)
_LOG_HUGE = math.log(sys.float_info.max)
_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)

# 1/Gamma(z) = sum_k A[k-1] z^k; 1/Gamma(1+x) = sum_k A[k] x^k
_RGAMMA_TAYLOR = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
)

_DEBYE_ORDER = 50.0
_NEAR_INTEGER = 1e-6
_C_SHIFT = 1e-3
_U_NEAR_INTEGER = 1e-3
_U_SERIES_LIMIT = 1.0


@dataclass(frozen=True)
class AccuracyPolicy:
    rel_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self) -> None:
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive (rel_tol={self.rel_tol})")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1 (max_terms={self.max_terms})")


DEFAULT_POLICY = AccuracyPolicy()
_active_policy = DEFAULT_POLICY


def set_policy(policy: AccuracyPolicy) -> None:
    global _active_policy
    _active_policy = policy


def resolve_policy(policy: AccuracyPolicy | None) -> AccuracyPolicy:
    return _active_policy if policy is None else policy


def exp_clamped(log_value: float, sign: float = 1.0) -> float:
    """exp() with the underflow-to-zero policy and signed overflow to infinity."""
    if log_value < _LOG_TINY:
        return 0.0
    if log_value > _LOG_HUGE:
        return math.copysign(math.inf, sign)
    return sign * math.exp(log_value)


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


def _gamma_sign(x: float) -> float:
    if x > 0:
        return 1.0
    return -1.0 if math.floor(x) % 2 else 1.0


def _log_gamma_ratio(nums: tuple[float, ...], dens: tuple[float, ...]) -> tuple[float, float] | None:
    """log|prod Gamma(nums) / prod Gamma(dens)| with its sign; None when a denominator is a pole."""
    if any(_is_nonpositive_integer(v) for v in dens):
        return None
    log_value = 0.0
    sign = 1.0
    for v in nums:
        if _is_nonpositive_integer(v):
            raise DomainError(f"gamma pole at {v}")
        log_value += math.lgamma(v)
        sign *= _gamma_sign(v)
    for v in dens:
        log_value -= math.lgamma(v)
        sign *= _gamma_sign(v)
    return log_value, sign


def ln_gamma(x: float) -> float:
    if not x > 0 or math.isinf(x):
        raise DomainError(f"ln_gamma requires x > 0 (x={x})")
    return math.lgamma(x)


def digamma(x: float) -> float:
    if math.isnan(x) or _is_nonpositive_integer(x):
        raise DomainError(f"digamma pole at x={x}")
    if x < 0:
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    result = 0.0
    while x < 10.0:
        result -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = inv2 * (1 / 12 - inv2 * (1 / 120 - inv2 * (1 / 252 - inv2 * (1 / 240 - inv2 / 132))))
    return result + math.log(x) - 0.5 / x - tail


def binom(n: int, k: int) -> float:
    if n < 0 or k < 0 or int(n) != n or int(k) != k:
        raise DomainError(f"binom requires nonnegative integers (n={n}, k={k})")
    n, k = int(n), int(k)
    if k > n:
        raise DomainError(f"binom requires k <= n (n={n}, k={k})")
    if n <= 60:
        return float(math.comb(n, k))
    return math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1))


# ---------------------------------------------------------------- Bessel K

def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    mu2 = mu * mu
    gam1 = 0.0
    gam2 = 0.0
    power = 1.0
    for j in range(len(_RGAMMA_TAYLOR) // 2):
        gam2 += _RGAMMA_TAYLOR[2 * j] * power
        gam1 -= _RGAMMA_TAYLOR[2 * j + 1] * power
        power *= mu2
    gampl = gam2 - mu * gam1  # 1/Gamma(1+mu)
    gammi = gam2 + mu * gam1  # 1/Gamma(1-mu)
    return gam1, gam2, gampl, gammi


def _bessel_k_low_order(mu: float, x: float, policy: AccuracyPolicy) -> tuple[float, float, float]:
    """K_mu(x), K_{mu+1}(x) for |mu| <= 1/2 as (k_mu, k_mu1, log_scale)."""
    eps = 1e-16
    if x <= 2.0:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < eps else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < eps else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _temme_gammas(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, policy.max_terms + 1):
            ff = (i * ff + p + q) / (i * i - mu * mu)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * eps:
                return total, total1 * 2.0 / x, 0.0
        raise ConvergenceError(f"bessel_k series did not converge (mu={mu}, x={x})")

    # Steed's continued fraction, scaled by exp(x)
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, policy.max_terms + 1):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < eps:
            break
    else:
        raise ConvergenceError(f"bessel_k continued fraction did not converge (mu={mu}, x={x})")
    h = a1 * h
    k_mu = math.sqrt(math.pi / (2.0 * x)) / s
    k_mu1 = k_mu * (mu + x + 0.5 - h) / x
    return k_mu, k_mu1, -x


def _debye_log_k(nu: float, x: float) -> float:
    z = x / nu
    s = math.sqrt(1.0 + z * z)
    p = 1.0 / s
    p2 = p * p
    eta = s + math.log(z / (1.0 + s))
    u1 = p * (3.0 - 5.0 * p2) / 24.0
    u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0
    u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2**2 - 425425.0 * p2**3) / 414720.0
    u4 = p2 * p2 * (
        4465125.0 - 94121676.0 * p2 + 349922430.0 * p2**2 - 446185740.0 * p2**3 + 185910725.0 * p2**4
    ) / 39813120.0
    series = 1.0 - u1 / nu + u2 / nu**2 - u3 / nu**3 + u4 / nu**4
    return 0.5 * math.log(math.pi / (2.0 * nu)) - nu * eta - 0.5 * math.log(s) + math.log(series)


def log_bessel_k(nu: float, x: float, policy: AccuracyPolicy | None = None) -> float:
    """ln K_nu(x). Orders above 50 use the Debye uniform expansion."""
    policy = resolve_policy(policy)
    if not nu >= 0 or math.isinf(nu):
        raise DomainError(f"bessel_k requires nu >= 0 (nu={nu})")
    if not x > 0:
        raise DomainError(f"bessel_k requires x > 0 (x={x})")
    if math.isinf(x):
        return -math.inf
    if nu > _DEBYE_ORDER:
        return _debye_log_k(nu, x)

    nl = int(nu + 0.5)
    mu = nu - nl
    k_mu, k_mu1, log_scale = _bessel_k_low_order(mu, x, policy)
    for i in range(1, nl + 1):
        k_mu, k_mu1 = k_mu1, (mu + i) * (2.0 / x) * k_mu1 + k_mu
        if k_mu1 > _RESCALE:
            k_mu /= _RESCALE
            k_mu1 /= _RESCALE
            log_scale += _LOG_RESCALE
    return math.log(k_mu) + log_scale


def bessel_k(nu: float, x: float, policy: AccuracyPolicy | None = None) -> float:
    return exp_clamped(log_bessel_k(nu, x, policy))


# ---------------------------------------------------------------- Bessel J

def _bessel_j_series(nu: float, x: float, policy: AccuracyPolicy) -> float:
    quarter = 0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, policy.max_terms + 1):
        term *= -quarter / (k * (k + nu))
        total += term
        if abs(term) <= 1e-17 * abs(total) and quarter < k * (k + nu):
            break
    else:
        raise ConvergenceError(f"bessel_j series did not converge (nu={nu}, x={x})")
    return exp_clamped(nu * math.log(0.5 * x) - math.lgamma(nu + 1.0)) * total


def _bessel_j_miller(nu: float, x: float) -> float:
    """Backward recurrence normalised by (x/2)^mu = sum_k (mu+2k) Gamma(mu+k)/k! J_{mu+2k}(x)."""
    mu = nu - math.floor(nu)
    target_index = int(round(nu - mu))
    reach = max(nu, x)
    top = int(reach + 30.0 + 10.0 * reach ** (1.0 / 3.0))

    f_above = 0.0
    f = 1e-30
    norm = 0.0
    target = 0.0
    for j in range(top, 0, -1):
        if j == target_index:
            target = f
        if j % 2 == 0:
            k = j // 2
            norm += (mu + 2 * k) * math.exp(math.lgamma(mu + k) - math.lgamma(k + 1)) * f
        f_above, f = f, (2.0 * (mu + j) / x) * f - f_above
        if abs(f) > _RESCALE:
            f /= _RESCALE
            f_above /= _RESCALE
            norm /= _RESCALE
            target /= _RESCALE
    if target_index == 0:
        target = f
    norm += math.gamma(mu + 1.0) * f
    return target * (0.5 * x) ** mu / norm


def bessel_j(nu: float, x: float, policy: AccuracyPolicy | None = None) -> float:
    policy = resolve_policy(policy)
    if not nu >= 0 or math.isinf(nu):
        raise DomainError(f"bessel_j requires nu >= 0 (nu={nu})")
    if not x >= 0:
        raise DomainError(f"bessel_j requires x >= 0 (x={x})")
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    if x <= 2.0 or x * x <= 2.0 * (nu + 1.0):
        return _bessel_j_series(nu, x, policy)
    return _bessel_j_miller(nu, x)


def omega_d(d: int, x: float, policy: AccuracyPolicy | None = None) -> float:
    """Gamma(d/2) (2/x)^(d/2-1) J_{d/2-1}(x), the radial characteristic function of the sphere."""
    policy = resolve_policy(policy)
    if int(d) != d or d < 1:
        raise DomainError(f"omega_d requires a positive integer d (d={d})")
    if not x >= 0:
        raise DomainError(f"omega_d requires x >= 0 (x={x})")
    if x == 0.0:
        return 1.0
    if d == 1:
        return math.cos(x)
    if d == 3:
        return math.sin(x) / x
    order = 0.5 * d - 1.0
    return math.exp(math.lgamma(0.5 * d) + order * math.log(2.0 / x)) * bessel_j(order, x, policy)


# ---------------------------------------------------------------- 2F1

def _series_2f1(a: float, b: float, c: float, z: float, policy: AccuracyPolicy) -> float:
    term = 1.0
    total = 1.0
    for k in range(policy.max_terms):
        ratio = (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        term *= ratio
        total += term
        if term == 0.0:
            return total
        if abs(term) <= policy.rel_tol * 1e-2 * abs(total) and abs(ratio) < 1.0:
            return total
    raise ConvergenceError(f"2F1 series exceeded {policy.max_terms} terms (a={a}, b={b}, c={c}, z={z})")


def _scaled(log_value: float, sign: float, series: float) -> float:
    if series == 0.0:
        return 0.0
    return exp_clamped(log_value + math.log(abs(series)), sign * math.copysign(1.0, series))


def _hyp2f1_connection(a: float, b: float, c: float, w: float, log_scale: float, policy: AccuracyPolicy) -> float:
    s = c - a - b
    value = 0.0
    first = _log_gamma_ratio((c, s), (c - a, c - b))
    if first is not None:
        value += _scaled(log_scale + first[0], first[1], _series_2f1(a, b, 1.0 - s, w, policy))
    second = _log_gamma_ratio((c, -s), (a, b))
    if second is not None:
        series = _series_2f1(c - a, c - b, 1.0 + s, w, policy)
        value += _scaled(log_scale + second[0] + s * math.log(w), second[1], series)
    return value


def _hyp2f1_logarithmic(a: float, b: float, m: int, w: float, log_scale: float, policy: AccuracyPolicy) -> float:
    """2F1(a, b; a+b+m; 1-w) for integer m >= 0, expanded around w = 0."""
    c = a + b + m
    value = 0.0

    if m > 0:
        coef = _log_gamma_ratio((float(m), c), (a + m, b + m))
        if coef is not None:
            term = 1.0
            finite = 1.0
            for n in range(m - 1):
                term *= (a + n) * (b + n) / ((n + 1) * (1 - m + n)) * w
                finite += term
            value += _scaled(log_scale + coef[0], coef[1], finite)

    coef = _log_gamma_ratio((c,), (a, b))
    if coef is None:
        return value
    log_w = math.log(w)
    psi_n1 = digamma(1.0)
    psi_nm1 = digamma(m + 1.0)
    psi_a = digamma(a + m)
    psi_b = digamma(b + m)
    term = 1.0 / math.factorial(m)
    total = term * (log_w - psi_n1 - psi_nm1 + psi_a + psi_b)
    for n in range(policy.max_terms):
        term *= (a + m + n) * (b + m + n) / ((n + 1) * (n + m + 1)) * w
        psi_n1 += 1.0 / (n + 1)
        psi_nm1 += 1.0 / (n + m + 1)
        psi_a += 1.0 / (a + m + n)
        psi_b += 1.0 / (b + m + n)
        delta = term * (log_w - psi_n1 - psi_nm1 + psi_a + psi_b)
        total += delta
        if abs(delta) <= policy.rel_tol * 1e-2 * abs(total):
            break
    else:
        raise ConvergenceError(f"logarithmic 2F1 series did not converge (a={a}, b={b}, m={m}, w={w})")
    sign = -1.0 if m % 2 == 0 else 1.0  # -(z-1)^m = -(-w)^m
    value += _scaled(log_scale + coef[0] + m * log_w, sign * coef[1], total)
    return value


def _hyp2f1(
    a: float,
    b: float,
    c: float,
    z: float,
    w: float,
    log_scale: float,
    policy: AccuracyPolicy,
    method: str,
) -> float:
    if _is_nonpositive_integer(c):
        raise DomainError(f"gauss_2f1 requires c not a nonpositive integer (c={c})")
    if method not in {"auto", "series", "transform"}:
        raise DomainError(f"unknown 2F1 method {method!r}")

    terminating = _is_nonpositive_integer(a) or _is_nonpositive_integer(b)
    if z == 0.0 or terminating or method == "series" or (method == "auto" and z <= 0.5):
        series = _series_2f1(a, b, c, z, policy)
        return _scaled(log_scale, 1.0, series)

    s = c - a - b
    m = round(s)
    if abs(s - m) >= _NEAR_INTEGER:
        return _hyp2f1_connection(a, b, c, w, log_scale, policy)

    if m < 0:
        # Euler: 2F1(a,b;c;z) = (1-z)^(c-a-b) 2F1(c-a, c-b; c; z)
        return _hyp2f1(c - a, c - b, c, z, w, log_scale + s * math.log(w), policy, method)

    exact = _hyp2f1_logarithmic(a, b, int(m), w, log_scale, policy)
    eps = s - m
    if eps == 0.0:
        return exact
    logger.debug("2F1 near-integer c-a-b=%s, interpolating in c", s)
    c0 = a + b + m
    upper = _hyp2f1_connection(a, b, c0 + _C_SHIFT, w, log_scale, policy)
    lower = _hyp2f1_connection(a, b, c0 - _C_SHIFT, w, log_scale, policy)
    slope = (upper - lower) / (2.0 * _C_SHIFT)
    curvature = (upper - 2.0 * exact + lower) / (2.0 * _C_SHIFT * _C_SHIFT)
    return exact + eps * slope + eps * eps * curvature


def hyp2f1_scaled(
    a: float,
    b: float,
    c: float,
    z: float,
    log_scale: float = 0.0,
    policy: AccuracyPolicy | None = None,
    method: str = "auto",
) -> float:
    """exp(log_scale) * 2F1(a, b; c; z), combining the prefactor before exponentiation."""
    if not 0.0 <= z < 1.0:
        raise DomainError(f"gauss_2f1 requires 0 <= z < 1 (z={z})")
    return _hyp2f1(a, b, c, z, 1.0 - z, log_scale, resolve_policy(policy), method)


def hyp2f1_scaled_complement(
    a: float,
    b: float,
    c: float,
    w: float,
    log_scale: float = 0.0,
    policy: AccuracyPolicy | None = None,
) -> float:
    """exp(log_scale) * 2F1(a, b; c; 1 - w).

    Takes the distance to the singular point directly, so w far below the
    spacing of doubles near 1 keeps its digits.
    """
    if not 0.0 < w <= 1.0:
        raise DomainError(f"gauss_2f1 complement requires 0 < w <= 1 (w={w})")
    return _hyp2f1(a, b, c, 1.0 - w, w, log_scale, resolve_policy(policy), "auto")


def gauss_2f1(a: float, b: float, c: float, z: float, policy: AccuracyPolicy | None = None, method: str = "auto") -> float:
    return hyp2f1_scaled(a, b, c, z, 0.0, policy, method)


# ---------------------------------------------------------------- 1F1 / U

def _series_1f1(a: float, b: float, z: float, policy: AccuracyPolicy) -> float:
    term = 1.0
    total = 1.0
    for k in range(policy.max_terms):
        ratio = (a + k) / ((b + k) * (k + 1)) * z
        term *= ratio
        total += term
        if term == 0.0:
            return total
        if abs(term) <= policy.rel_tol * 1e-2 * abs(total) and abs(ratio) < 1.0:
            return total
    raise ConvergenceError(f"1F1 series exceeded {policy.max_terms} terms (a={a}, b={b}, z={z})")


def kummer_m(a: float, b: float, z: float, policy: AccuracyPolicy | None = None) -> float:
    policy = resolve_policy(policy)
    if not z >= 0:
        raise DomainError(f"kummer_m requires z >= 0 (z={z})")
    if _is_nonpositive_integer(b):
        raise DomainError(f"kummer_m requires b not a nonpositive integer (b={b})")
    return _series_1f1(a, b, z, policy)


def _u_combination(a: float, b: float, z: float, log_scale: float, policy: AccuracyPolicy) -> float:
    value = 0.0
    first = _log_gamma_ratio((1.0 - b,), (a - b + 1.0,))
    if first is not None:
        value += _scaled(log_scale + first[0], first[1], _series_1f1(a, b, z, policy))
    second = _log_gamma_ratio((b - 1.0,), (a,))
    if second is not None:
        series = _series_1f1(a - b + 1.0, 2.0 - b, z, policy)
        value += _scaled(log_scale + second[0] + (1.0 - b) * math.log(z), second[1], series)
    return value


def _u_integral(a: float, b: float, z: float, log_scale: float) -> float:
    """U via (1/Gamma(a)) int_0^inf exp(-z t) t^(a-1) (1+t)^(b-a-1) dt."""

    def log_integrand(t: float) -> float:
        return -z * t + (a - 1.0) * math.log(t) + (b - a - 1.0) * math.log1p(t)

    if a > 1.0:
        lin = z + 2.0 - b
        peak = 2.0 * (a - 1.0) / (lin + math.sqrt(lin * lin + 4.0 * z * (a - 1.0)))
        shift = log_integrand(peak) if peak > 0 else 0.0
    else:
        peak = 0.0
        shift = 0.0
    # for b < 1 the algebraic tail is integrable without exp(-z t)
    width = max(1.0, math.sqrt(max(a, 1.0))) / (z if b >= 1.0 else max(z, 1.0))

    def integrand(t: float) -> float:
        if t <= 0.0:
            return 0.0
        return math.exp(log_integrand(t) - shift)

    pieces: list[tuple[float, ...]] = []
    if a < 1.0:
        # t^(a-1) is handled by the algebraic weight on [0, 1]
        result = integrate.quad(
            lambda t: math.exp(-z * t + (b - a - 1.0) * math.log1p(t)),
            0.0, 1.0, weight="alg", wvar=(a - 1.0, 0.0), epsabs=0.0, epsrel=1e-12, limit=200, full_output=1,
        )
        pieces.append(result)
        pieces.append(integrate.quad(integrand, 1.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1))
    else:
        upper = peak + 40.0 * width
        if peak > 0:
            pieces.append(integrate.quad(integrand, 0.0, peak, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1))
        pieces.append(integrate.quad(integrand, peak, upper, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1))
        pieces.append(integrate.quad(integrand, upper, math.inf, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1))

    total = sum(p[0] for p in pieces)
    error = sum(p[1] for p in pieces)
    if not total > 0 or error > 1e-9 * total:
        raise QuadratureError(f"tricomi_u quadrature failed (a={a}, b={b}, z={z}, est_err={error:.3g})")
    return exp_clamped(log_scale - math.lgamma(a) + shift + math.log(total))


def tricomi_u_scaled(
    a: float,
    b: float,
    z: float,
    log_scale: float = 0.0,
    policy: AccuracyPolicy | None = None,
) -> float:
    """exp(log_scale) * U(a, b, z) for a > 0."""
    policy = resolve_policy(policy)
    if not a > 0:
        raise DomainError(f"tricomi_u requires a > 0 (a={a})")
    if not z >= 0:
        raise DomainError(f"tricomi_u requires z >= 0 (z={z})")
    if z == 0.0:
        if not b < 1.0:
            raise DomainError(f"tricomi_u at z=0 requires b < 1 (b={b})")
        return exp_clamped(log_scale + math.lgamma(1.0 - b) - math.lgamma(a - b + 1.0))
    if z > _U_SERIES_LIMIT or abs(b - round(b)) < _U_NEAR_INTEGER:
        # the M combination cancels between two Gamma poles near integer b
        return _u_integral(a, b, z, log_scale)
    return _u_combination(a, b, z, log_scale, policy)


def tricomi_u(a: float, b: float, z: float, policy: AccuracyPolicy | None = None) -> float:
    return tricomi_u_scaled(a, b, z, 0.0, policy)

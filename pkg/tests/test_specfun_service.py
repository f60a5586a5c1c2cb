from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest

from app.core.errors import ConvergenceError, DomainError
from app.services import specfun_service as sf

mp.mp.dps = 40


def rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


@pytest.mark.parametrize(
    ("x", "expected"),
    [(1.0, 0.0), (0.5, math.log(math.sqrt(math.pi))), (5.0, math.log(24.0))],
)
def test_ln_gamma_known_values(x, expected):
    assert sf.ln_gamma(x) == pytest.approx(expected, abs=1e-14)


def test_ln_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        sf.ln_gamma(0.0)


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 2.5, 7.3, 40.0, -0.5, -2.7])
def test_digamma_matches_mpmath(x):
    assert sf.digamma(x) == pytest.approx(float(mp.digamma(x)), rel=1e-12, abs=1e-13)


def test_digamma_pole():
    with pytest.raises(DomainError):
        sf.digamma(-3.0)


def test_bessel_k_half_integer_closed_forms():
    assert sf.bessel_k(0.5, 2.0) == pytest.approx(math.sqrt(math.pi / 4.0) * math.exp(-2.0), rel=1e-13)
    assert sf.bessel_k(1.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2.0) * math.exp(-1.0) * 2.0, rel=1e-13)


@pytest.mark.parametrize(
    ("nu", "x"),
    [(0.3, 0.7), (0.0, 0.01), (0.0, 1.5), (1.0, 2.0), (2.25, 3.1), (4.7, 0.2), (10.0, 25.0), (0.49, 50.0), (30.0, 5.0)],
)
def test_bessel_k_against_extended_precision(nu, x):
    assert rel(sf.bessel_k(nu, x), float(mp.besselk(nu, x))) < 1e-11


@pytest.mark.parametrize(("nu", "x"), [(60.0, 1.0), (100.0, 50.0), (1e3, 200.0), (200.0, 0.5)])
def test_log_bessel_k_large_orders(nu, x):
    oracle = float(mp.log(mp.besselk(nu, x)))
    assert sf.log_bessel_k(nu, x) == pytest.approx(oracle, rel=1e-10)


def test_bessel_k_underflows_to_zero():
    assert sf.bessel_k(0.5, 800.0) == 0.0


def test_bessel_k_three_term_recurrence():
    rng = np.random.default_rng(17)
    for nu, x in zip(rng.uniform(1.0, 12.0, 40), rng.uniform(0.05, 40.0, 40)):
        lower = sf.bessel_k(nu - 1.0, x)
        middle = sf.bessel_k(nu, x)
        upper = sf.bessel_k(nu + 1.0, x)
        assert rel(upper, lower + 2.0 * nu / x * middle) < 1e-9


def test_bessel_k_domain():
    with pytest.raises(DomainError):
        sf.bessel_k(-1.0, 1.0)
    with pytest.raises(DomainError):
        sf.bessel_k(1.0, 0.0)


def test_bessel_j_known_values():
    assert sf.bessel_j(0.5, math.pi) == pytest.approx(0.0, abs=1e-14)
    assert sf.bessel_j(0.0, 0.0) == 1.0
    assert sf.bessel_j(2.0, 0.0) == 0.0


@pytest.mark.parametrize(("nu", "x"), [(2.0, 5.0), (0.0, 1.0), (0.5, 12.0), (1.0, 30.0), (7.5, 3.0), (0.0, 20.0)])
def test_bessel_j_against_extended_precision(nu, x):
    assert sf.bessel_j(nu, x) == pytest.approx(float(mp.besselj(nu, x)), rel=1e-9, abs=1e-14)


def test_omega_d_known_values():
    assert sf.omega_d(1, 1.2) == pytest.approx(math.cos(1.2), abs=1e-15)
    assert sf.omega_d(3, 2.0) == pytest.approx(math.sin(2.0) / 2.0, abs=1e-15)
    for d in range(1, 6):
        assert sf.omega_d(d, 0.0) == 1.0


def test_omega_d_in_two_dimensions_is_j0():
    assert sf.omega_d(2, 3.3) == pytest.approx(float(mp.besselj(0, 3.3)), rel=1e-10)


def test_gauss_2f1_trivial_cases():
    assert sf.gauss_2f1(0.3, 1.7, 2.2, 0.0) == 1.0
    assert sf.gauss_2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(-math.log(0.5) / 0.5, rel=1e-14)


@pytest.mark.parametrize(
    ("a", "b", "c", "z"),
    [
        (0.75, 1.25, 3.5, 0.9),
        (0.5, 1.5, 2.7, 0.3),
        (1.2, 2.4, 4.1, 0.97),
        (1.0, 2.0, 3.0, 0.8),  # c - a - b = 0, logarithmic case
        (1.0, 1.0, 4.0, 0.95),  # c - a - b = 2
        (2.0, 2.5, 3.5, 0.7),  # c - a - b = -1, Euler transform
        (-3.0, 1.5, 2.5, 0.9),  # terminating
    ],
)
def test_gauss_2f1_against_extended_precision(a, b, c, z):
    assert rel(sf.gauss_2f1(a, b, c, z), float(mp.hyp2f1(a, b, c, z))) < 1e-10


def test_gauss_2f1_near_integer_gap_stays_continuous():
    exact = sf.gauss_2f1(1.0, 2.0, 3.0, 0.8)
    nearby = sf.gauss_2f1(1.0, 2.0, 3.0 + 1e-8, 0.8)
    assert rel(nearby, float(mp.hyp2f1(1.0, 2.0, 3.0 + 1e-8, 0.8))) < 1e-8
    assert abs(nearby - exact) < 1e-6


def test_hyp2f1_scaled_combines_prefactor():
    plain = sf.gauss_2f1(0.5, 1.5, 4.0, 0.6)
    scaled = sf.hyp2f1_scaled(0.5, 1.5, 4.0, 0.6, log_scale=10.0)
    assert scaled == pytest.approx(math.exp(10.0) * plain, rel=1e-12)


@pytest.mark.parametrize(
    ("a", "b", "c"),
    [(0.75, 1.25, 3.5), (0.5, 1.5, 2.7), (1.0, 2.0, 3.0), (1.0, 1.0, 4.0), (2.0, 2.5, 3.5)],
)
def test_gauss_2f1_series_and_transform_agree_on_overlap(a, b, c):
    for z in np.linspace(0.4, 0.6, 9):
        series = sf.gauss_2f1(a, b, c, float(z), method="series")
        transform = sf.gauss_2f1(a, b, c, float(z), method="transform")
        assert rel(transform, series) < 1e-9


@pytest.mark.parametrize("w", [1e-9, 1e-12, 1e-20, 0.3])
def test_hyp2f1_complement_keeps_digits_next_to_one(w):
    a, b, c = 1.5, 2.0, 4.3
    oracle = mp.hyp2f1(a, b, c, 1 - mp.mpf(w))
    assert rel(sf.hyp2f1_scaled_complement(a, b, c, w), float(oracle)) < 1e-10


def test_hyp2f1_complement_domain():
    with pytest.raises(DomainError):
        sf.hyp2f1_scaled_complement(1.0, 1.0, 3.0, 0.0)
    with pytest.raises(DomainError):
        sf.hyp2f1_scaled_complement(1.0, 1.0, 3.0, 1.5)


def test_gauss_2f1_domain():
    with pytest.raises(DomainError):
        sf.gauss_2f1(1.0, 1.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        sf.gauss_2f1(1.0, 1.0, -2.0, 0.5)


def test_series_budget_is_honored():
    policy = sf.AccuracyPolicy(rel_tol=1e-12, max_terms=3)
    with pytest.raises(ConvergenceError):
        sf.gauss_2f1(0.5, 0.5, 1.7, 0.45, policy=policy, method="series")


def test_kummer_m_against_extended_precision():
    assert rel(sf.kummer_m(0.5, 1.5, 2.0), float(mp.hyp1f1(0.5, 1.5, 2.0))) < 1e-12
    assert rel(sf.kummer_m(-1.5, 2.5, 3.0), float(mp.hyp1f1(-1.5, 2.5, 3.0))) < 1e-12


def test_tricomi_u_known_values():
    assert sf.tricomi_u(2.0, 3.0, 3.0) == pytest.approx(1.0 / 9.0, rel=1e-9)
    assert sf.tricomi_u(2.0, 0.0, 0.0) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize(
    ("a", "b", "z", "tol"),
    [
        (1.5, 0.3, 0.5, 1e-10),
        (3.0, -1.2, 0.8, 1e-9),
        (2.0, -0.5, 4.0, 1e-9),
        (0.7, 0.2, 2.5, 1e-9),
        (50.0, -0.5, 7.0, 1e-9),
        (1.5, 0.0, 0.4, 1e-9),  # integer b
    ],
)
def test_tricomi_u_against_extended_precision(a, b, z, tol):
    assert rel(sf.tricomi_u(a, b, z), float(mp.hyperu(a, b, z))) < tol


@pytest.mark.parametrize(
    ("a", "b", "z"),
    [
        (10.0, -1.0, 1.0),
        (10.0, -4.0, 0.8),
        (2.0, 0.0, 0.3),
        (2.0, 0.0, 0.81),
        (1.5, 0.0, 1e-6),
        (3.0, -2.0, 1e-9),
        (0.7, -1.0, 0.5),
        (4.0, -1.0 + 3e-4, 0.6),
    ],
)
def test_tricomi_u_at_and_near_integer_b(a, b, z):
    assert rel(sf.tricomi_u(a, b, z), float(mp.hyperu(a, b, z))) < 1e-9


def test_tricomi_u_domain():
    with pytest.raises(DomainError):
        sf.tricomi_u(0.0, 0.5, 1.0)
    with pytest.raises(DomainError):
        sf.tricomi_u(1.0, 1.5, 0.0)


@pytest.mark.parametrize(("n", "k", "expected"), [(4, 2, 6.0), (7, 0, 1.0), (30, 15, 155117520.0)])
def test_binom(n, k, expected):
    assert sf.binom(n, k) == expected


def test_binom_domain():
    with pytest.raises(DomainError):
        sf.binom(3, 5)


def test_accuracy_policy_validation():
    with pytest.raises(DomainError):
        sf.AccuracyPolicy(rel_tol=0.0)
    with pytest.raises(DomainError):
        sf.AccuracyPolicy(max_terms=0)


def test_exp_clamped():
    assert sf.exp_clamped(-1e4) == 0.0
    assert sf.exp_clamped(1e4) == math.inf
    assert sf.exp_clamped(1e4, sign=-1.0) == -math.inf
    assert sf.exp_clamped(0.0) == 1.0

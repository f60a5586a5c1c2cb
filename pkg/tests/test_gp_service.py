from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.core.errors import (
    DimensionOutOfRange,
    FlatData,
    NoFreeParameters,
    UnsupportedFamily,
    UnsupportedPair,
)
from app.services import gp_service as gp
from app.services import kernel_service as ks
from app.services import linalg_service as la
from app.services.parallel_service import ThreadPoolMap

LN_2PI = math.log(2.0 * math.pi)


def exponential(alpha: float = 1.0, sigma2: float = 1.0) -> ks.CovarianceModel:
    return ks.CovarianceModel(ks.Matern(0.5, alpha), sigma2)


def dense_loglik(model: ks.CovarianceModel, data: gp.GpDataset) -> float:
    sigma = la.build_cov_matrix(model, data.sites).entries
    z = np.asarray(data.values)
    _, logdet = np.linalg.slogdet(sigma)
    return -0.5 * (z.size * LN_2PI + logdet + z @ np.linalg.inv(sigma) @ z)


@pytest.fixture
def line_data() -> gp.GpDataset:
    sites = la.make_sites([0.0, 0.15, 0.4, 0.45, 0.8, 1.0])
    return gp.make_dataset(sites, [0.3, -1.2, 0.8, 1.1, -0.4, 0.2])


def test_simulate_is_deterministic_and_thread_independent():
    sites = la.grid_sites(0.25, 2)
    model = ks.CovarianceModel(ks.Matern(1.5, 0.3), 2.0)
    first = gp.simulate(model, sites, seed=7, replicates=4)
    again = gp.simulate(model, sites, seed=7, replicates=4)
    with ThreadPoolMap(3) as pmap:
        threaded = gp.simulate(model, sites, seed=7, replicates=4, pmap=pmap)
    for a, b, c in zip(first, again, threaded):
        assert_array_equal(a.values, b.values)
        assert_array_equal(a.values, c.values)
    assert [r.replicate for r in first] == [0, 1, 2, 3]
    assert not np.array_equal(first[0].values, first[1].values)


def test_simulate_scalar_variance():
    sites = la.make_sites([0.0])
    draws = gp.simulate(exponential(sigma2=4.0), sites, seed=1, replicates=20_000)
    values = np.array([r.values[0] for r in draws])
    assert values.var() == pytest.approx(4.0, rel=0.05)


def test_krige_is_exact_at_sites(line_data):
    model = ks.CovarianceModel(ks.Matern(1.5, 0.2), 1.5)
    pred = gp.krige(model, line_data, [0.4])
    assert pred.mean == line_data.values[2]
    assert pred.variance == 0.0


def test_krige_single_site_algebra():
    model = exponential(sigma2=2.0)
    data = gp.make_dataset(la.make_sites([0.0]), [3.0])
    pred = gp.krige(model, data, [0.5])
    phi = math.exp(-0.5)
    assert pred.mean == pytest.approx(phi * 3.0, rel=1e-13)
    assert pred.variance == pytest.approx(2.0 * (1.0 - phi**2), rel=1e-13)


def test_krige_outside_compact_support():
    model = ks.CovarianceModel(ks.Askey(2.0, 0.5), 3.0)
    data = gp.make_dataset(la.make_sites([0.0, 0.1]), [1.0, 2.0])
    pred = gp.krige(model, data, [5.0])
    assert pred.mean == 0.0
    assert pred.variance == pytest.approx(3.0, rel=1e-15)


def test_krige_many_matches_single_calls(line_data):
    model = exponential(alpha=0.3)
    targets = [[0.05], [0.6], [0.95]]
    many = gp.krige_many(model, line_data, targets)
    for target, pred in zip(targets, many):
        single = gp.krige(model, line_data, target)
        assert pred.mean == pytest.approx(single.mean, rel=1e-12, abs=1e-15)
        assert pred.variance == pytest.approx(single.variance, rel=1e-12, abs=1e-15)


def test_power_function_duality(line_data):
    model = ks.CovarianceModel(ks.Matern(2.5, 0.25), 1.7)
    for x0 in (0.05, 0.3, 0.62, 0.9):
        power = gp.power_function(model, line_data.sites, [x0])
        assert power**2 == pytest.approx(gp.krige(model, line_data, [x0]).variance, rel=1e-12, abs=1e-15)
    assert gp.power_function(model, line_data.sites, [0.8]) == 0.0


def test_power_function_without_sites():
    empty = la.make_sites(np.zeros((0, 2)))
    assert gp.power_function(exponential(sigma2=9.0), empty, [0.3, 0.3]) == pytest.approx(3.0)


def test_adding_a_site_never_increases_variance():
    rng = np.random.default_rng(5)
    points = rng.uniform(size=(12, 2))
    model = ks.CovarianceModel(ks.Matern(1.5, 0.3), 1.0)
    x0 = [0.5, 0.5]
    previous = math.inf
    for k in range(1, points.shape[0] + 1):
        var = gp.kriging_variance(model, la.make_sites(points[:k]), x0)
        assert var <= previous + 1e-10
        previous = var


def test_interpolant_norm2():
    model = exponential()
    sites = la.make_sites([0.0, 0.5, 1.0])
    assert gp.interpolant_norm2(model, gp.make_dataset(sites, np.zeros(3))) == 0.0
    single = gp.make_dataset(la.make_sites([0.2]), [3.0])
    assert gp.interpolant_norm2(model, single) == pytest.approx(9.0, rel=1e-14)


def test_interpolant_norm2_grows_with_nested_designs():
    model = ks.CovarianceModel(ks.Matern(1.5, 0.4), 1.0)
    points = np.linspace(0.0, 1.0, 9)
    values = np.sin(3.0 * points)
    subset = gp.make_dataset(la.make_sites(points[::2]), values[::2])
    full = gp.make_dataset(la.make_sites(points), values)
    assert gp.interpolant_norm2(model, subset) <= gp.interpolant_norm2(model, full) + 1e-10


def test_log_likelihood_small_cases():
    data = gp.make_dataset(la.make_sites([0.0]), [0.0])
    assert gp.log_likelihood(exponential(), data) == pytest.approx(-0.5 * LN_2PI, rel=1e-15)

    three = gp.make_dataset(la.make_sites([0.0, 0.3, 1.1]), [0.5, -0.2, 1.4])
    model = exponential(alpha=0.7, sigma2=1.3)
    assert gp.log_likelihood(model, three) == pytest.approx(dense_loglik(model, three), rel=1e-10)


def test_log_likelihood_separates_over_disjoint_supports():
    model = ks.CovarianceModel(ks.Askey(2.0, 0.5), 2.0)
    z = [0.7, -1.1, 0.4]
    data = gp.make_dataset(la.make_sites([0.0, 1.0, 2.0]), z)
    univariate = sum(-0.5 * (LN_2PI + math.log(2.0) + v * v / 2.0) for v in z)
    assert gp.log_likelihood(model, data) == pytest.approx(univariate, rel=1e-10)


def test_log_likelihood_is_permutation_invariant(line_data):
    model = ks.CovarianceModel(ks.Matern(1.5, 0.3), 1.0)
    shuffled = gp.reorder_dataset(line_data, "random", seed=4)
    assert gp.log_likelihood(model, shuffled) == pytest.approx(gp.log_likelihood(model, line_data), rel=1e-10)


def test_concentrated_loglik():
    with pytest.raises(FlatData):
        gp.concentrated_loglik(ks.Matern(0.5, 1.0), gp.make_dataset(la.make_sites([0.0, 1.0]), [0.0, 0.0]))
    single = gp.concentrated_loglik(ks.Matern(0.5, 1.0), gp.make_dataset(la.make_sites([0.0]), [2.0]))
    assert single.sigma2_hat == pytest.approx(4.0, rel=1e-15)


def test_concentrated_value_is_loglik_at_sigma2_hat(line_data):
    kernel = ks.Matern(1.5, 0.3)
    conc = gp.concentrated_loglik(kernel, line_data)
    full = gp.log_likelihood(ks.CovarianceModel(kernel, conc.sigma2_hat), line_data)
    assert conc.value == pytest.approx(full, rel=1e-12)


def test_fit_ml_needs_a_free_parameter(line_data):
    with pytest.raises(NoFreeParameters):
        gp.fit_ml(ks.Matern(0.5, 0.2), line_data, free=[])


def test_fit_ml_refit_is_a_fixed_point():
    sites = la.make_sites(np.linspace(0.0, 1.0, 60))
    data = gp.simulate(exponential(alpha=0.2), sites, seed=3)[0]
    first = gp.fit_ml(ks.Matern(0.5, 0.5), data, free=["alpha"], starts=2, seed=3)
    assert first.converged
    assert first.micro_hat == pytest.approx(first.sigma2_hat / first.theta_hat.alpha, rel=1e-12)
    refit = gp.fit_ml(first.theta_hat, data, free=["alpha"], starts=1)
    assert first.loglik - 1e-12 <= refit.loglik <= first.loglik + 1e-6
    assert set(first.to_json()) == {"theta_hat", "loglik", "sigma2_hat", "micro_hat", "iterations", "converged"}


@pytest.mark.slow
def test_fit_ml_recovers_microergodic_parameter():
    sites = la.make_sites(np.linspace(0.0, 1.0, 500))
    data = gp.simulate(exponential(alpha=0.1), sites, seed=11)[0]
    fit = gp.fit_ml(ks.Matern(0.5, 0.3), data, free=["alpha"], seed=11)
    assert fit.micro_hat == pytest.approx(10.0, rel=0.15)


@pytest.mark.parametrize(
    ("model", "expected"),
    [
        (ks.CovarianceModel(ks.Matern(0.5, 2.0), 8.0), 4.0),
        (ks.CovarianceModel(ks.GenWendland(0.0, 4.0, 0.5), 1.0), 2.0),
        (ks.CovarianceModel(ks.ConfluentHypergeometric(1.0, 2.0, 1.0), 1.0), 2.0),
    ],
)
def test_microergodic(model, expected):
    assert gp.microergodic(model) == pytest.approx(expected, rel=1e-13)


def test_microergodic_unsupported():
    with pytest.raises(UnsupportedFamily):
        gp.microergodic(ks.CovarianceModel(ks.Askey(2.0, 1.0), 1.0))


def test_equivalence_matern_pair():
    a = ks.CovarianceModel(ks.Matern(1.0, 1.0), 1.0)
    b = ks.CovarianceModel(ks.Matern(1.0, 2.0), 4.0)
    result = gp.equivalence_check(a, b, 2)
    assert result.equivalent
    assert result.condition_residual < 1e-12
    assert not gp.equivalence_check(a, ks.CovarianceModel(ks.Matern(1.0, 2.0), 3.0), 2).equivalent


def test_equivalence_matern_genwendland():
    matern = ks.CovarianceModel(ks.Matern(0.5, 0.1), 1.0)
    mu, beta = 4.0, 0.5
    sigma1 = 10.0 * beta / mu
    wendland = ks.CovarianceModel(ks.GenWendland(0.0, mu, beta), sigma1)
    result = gp.equivalence_check(matern, wendland, 1)
    assert result.equivalent
    assert result.condition == "matern-genwendland"
    swapped = gp.equivalence_check(wendland, matern, 1)
    assert swapped.equivalent == result.equivalent


def test_equivalence_side_condition_fails_for_small_mu():
    matern = ks.CovarianceModel(ks.Matern(0.5, 0.1), 1.0)
    mu, beta = 2.0, 0.5
    wendland = ks.CovarianceModel(ks.GenWendland(0.0, mu, beta), 10.0 * beta / mu)
    result = gp.equivalence_check(matern, wendland, 3)
    assert result.condition_residual < 1e-12
    assert not result.equivalent


def test_equivalence_matern_confluent():
    nu, eta, beta = 0.5, 2.0, 2.0
    matern = ks.CovarianceModel(ks.Matern(nu, 1.0), 1.0)
    ratio = math.gamma(nu + eta) / math.gamma(eta)
    sigma1 = 1.0 / (ratio * (beta**2 / 2.0) ** (-nu))
    confluent = ks.CovarianceModel(ks.ConfluentHypergeometric(nu, eta, beta), sigma1)
    assert gp.equivalence_check(matern, confluent, 2).equivalent


def test_equivalence_errors():
    matern = ks.CovarianceModel(ks.Matern(0.5, 1.0), 1.0)
    with pytest.raises(DimensionOutOfRange):
        gp.equivalence_check(matern, matern, 4)
    with pytest.raises(UnsupportedPair):
        gp.equivalence_check(matern, ks.CovarianceModel(ks.Askey(2.0, 1.0), 1.0), 1)


def test_equivalence_is_symmetric():
    matern = ks.CovarianceModel(ks.Matern(0.5, 0.1), 1.0)
    pairs = [
        (matern, ks.CovarianceModel(ks.Matern(0.5, 0.2), 2.0)),
        (matern, ks.CovarianceModel(ks.Matern(0.5, 0.2), 3.0)),
        (matern, ks.CovarianceModel(ks.Matern(1.5, 0.2), 2.0)),
        (matern, ks.CovarianceModel(ks.GenWendland(0.0, 4.0, 0.5), 1.25)),
        (matern, ks.CovarianceModel(ks.ConfluentHypergeometric(0.5, 2.0, 2.0), 0.5)),
    ]
    for a, b in pairs:
        for d in (1, 2, 3):
            assert gp.equivalence_check(a, b, d) == gp.equivalence_check(b, a, d)


def test_misspecified_mse_with_true_working_model():
    sites = la.make_sites([0.0, 0.25, 0.5, 0.75, 1.0])
    model = exponential(alpha=0.3)
    result = gp.misspecified_mse(model, model, sites, [0.1])
    assert result.ratio_efficiency == pytest.approx(1.0, rel=1e-9)
    assert result.ratio_variance_assessment == pytest.approx(1.0, rel=1e-9)
    assert result.mse_oracle == pytest.approx(gp.kriging_variance(model, sites, [0.1]), rel=1e-10)


def test_misspecified_oracle_is_optimal():
    sites = la.grid_sites(0.25, 2)
    true_model = exponential(alpha=0.1)
    working = ks.CovarianceModel(ks.Matern(1.5, 0.3), 2.0)
    for x0 in ([0.1, 0.1], [0.6, 0.35], [0.9, 0.9]):
        result = gp.misspecified_mse(true_model, working, sites, x0)
        assert result.ratio_efficiency >= 1.0 - 1e-12


def test_misspecified_refinement_ratios_approach_one():
    true_model = exponential(alpha=0.1)
    working = ks.CovarianceModel(ks.Matern(0.5, 0.2), 2.0)
    # n - 1 doubles: nested grids, and 1/3 always sits a third of a cell from a site
    rows = gp.misspecified_refinement(true_model, working, [11, 21, 41, 81, 161, 321], 1, [1.0 / 3.0])
    assert [n for n, _ in rows] == [11, 21, 41, 81, 161, 321]
    variance_gaps = [abs(r.ratio_variance_assessment - 1.0) for _, r in rows]
    efficiency_gaps = [r.ratio_efficiency - 1.0 for _, r in rows]
    assert all(gap >= -1e-12 for gap in efficiency_gaps)
    assert all(b < a for a, b in zip(variance_gaps, variance_gaps[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(efficiency_gaps, efficiency_gaps[1:]))
    assert variance_gaps[-1] <= 0.01
    assert efficiency_gaps[-1] <= 1e-3


def test_vecchia_full_conditioning_is_exact(line_data):
    model = ks.CovarianceModel(ks.Matern(1.5, 0.3), 1.2)
    exact = gp.log_likelihood(model, line_data)
    assert gp.vecchia_loglik(model, line_data, line_data.sites.n - 1) == pytest.approx(exact, rel=1e-8)


def test_vecchia_without_conditioning_is_independence(line_data):
    model = exponential(sigma2=2.0)
    independent = sum(-0.5 * (LN_2PI + math.log(2.0) + v * v / 2.0) for v in line_data.values)
    assert gp.vecchia_loglik(model, line_data, 0) == pytest.approx(independent, rel=1e-12)


def vecchia_kl(model: ks.CovarianceModel, sites: la.SiteSet, m: int) -> float:
    """KL divergence from the exact law to the Vecchia law; the log-densities at zero differ by exactly that."""
    zero = gp.make_dataset(sites, np.zeros(sites.n))
    return gp.log_likelihood(model, zero) - gp.vecchia_loglik(model, zero, m)


def test_vecchia_divergence_shrinks_as_conditioning_grows():
    model = ks.CovarianceModel(ks.Matern(1.5, 0.2), 1.0)
    grid = la.grid_sites(1 / 7, 2)
    for strategy in ("natural", "random", "maxmin"):
        sites = la.reorder(grid, strategy, seed=3)
        kls = [vecchia_kl(model, sites, m) for m in (0, 1, 2, 4, 8, 16, sites.n - 1)]
        assert kls[0] > 1.0
        assert all(b <= a + 1e-9 for a, b in zip(kls, kls[1:]))
        assert abs(kls[-1]) <= 1e-8


def test_vecchia_ordering_study():
    model = ks.CovarianceModel(ks.Matern(1.5, 0.1), 1.0)
    grid = la.grid_sites(1 / 11, 2)
    kl = {strategy: vecchia_kl(model, la.reorder(grid, strategy, seed=7), 4) for strategy in ("natural", "random", "maxmin")}
    assert kl["maxmin"] < kl["random"] < kl["natural"]


def test_vecchia_natural_order_is_exact_for_a_markov_line():
    model = exponential(alpha=0.3)
    line = la.make_sites(np.linspace(0.0, 1.0, 30))
    assert abs(vecchia_kl(model, line, 1)) <= 1e-9
    assert vecchia_kl(model, la.reorder(line, "random", seed=5), 1) > 1e-3


@pytest.mark.slow
def test_vecchia_error_median_over_seeds():
    model = ks.CovarianceModel(ks.Matern(1.5, 0.2), 1.0)
    sites = la.grid_sites(1 / 7, 2)
    errors = {m: [] for m in (1, 4, 16)}
    for seed in range(50):
        (data,) = gp.simulate(model, sites, seed)
        exact = gp.log_likelihood(model, data)
        for m in errors:
            errors[m].append(abs(gp.vecchia_loglik(model, data, m) - exact))
    medians = [float(np.median(errors[m])) for m in (1, 4, 16)]
    assert medians[0] >= medians[1] >= medians[2]

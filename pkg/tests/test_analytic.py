import math

import numpy as np
import pytest
from scipy import integrate

from src.calculations.analytic import (
    ResponseTimeTable, fcfs_terms, mean_response, mean_response_aggregate, moment_new, moment_old0_sq,
    moment_old1_sq, moment_old1_sq_2d, monte_carlo_terms, rho_prime, soap_mean_response, sprpt_lp_terms,
    srpt_mean_response,
)
from src.calculations.densities import DensityPair, QuadratureSpec, integrate_1d
from src.calculations.workload import PredictorModel, ServiceDist
from src.core.domain import DomainError, InstabilityError

EXP1 = ServiceDist(kind='exponential', mean=1.0)
PERFECT = DensityPair(EXP1, 'perfect')
NOISY = DensityPair(EXP1, 'exponential')


def test_pair_from_predictor():
    assert DensityPair.from_predictor(EXP1, PredictorModel(kind='perfect')).is_line_mass
    assert DensityPair.from_predictor(EXP1, PredictorModel(kind='exponential-noise')).kind == 'exponential'
    with pytest.raises(DomainError):
        DensityPair.from_predictor(EXP1, PredictorModel(kind='markov-trajectory'))
    with pytest.raises(DomainError):
        DensityPair(ServiceDist(kind='deterministic', value=1.0), 'perfect')


def test_perfect_predictor_closed_forms():
    r, lam = 1.5, 0.6
    assert rho_prime(r, PERFECT, lam) == pytest.approx(lam * (1 - math.exp(-r) * (1 + r)), rel=1e-7)
    assert moment_old0_sq(r, PERFECT) == pytest.approx(2 - math.exp(-r) * (r * r + 2 * r + 2), rel=1e-7)
    assert moment_old1_sq(r, 0.5, PERFECT) == pytest.approx(r * r * math.exp(-2.0), rel=1e-12)


@pytest.mark.parametrize("pair", [PERFECT, NOISY], ids=['perfect', 'exponential'])
def test_rho_prime_tends_to_the_total_load(pair):
    assert rho_prime(0.0, pair, 0.5) == 0.0
    assert rho_prime(1e4, pair, 0.5) == pytest.approx(0.5, rel=1e-5)
    values = [rho_prime(r, pair, 0.5) for r in (0.5, 1.0, 2.0, 4.0)]
    assert values == sorted(values)


def test_moment_new_vanishes_past_the_threshold():
    assert moment_new(2.0, 1.0, NOISY, a0=1.0) == 0.0
    assert moment_new(2.0, 2.5, NOISY) == 0.0
    assert moment_new(2.0, 0.5, NOISY, a0=1.0) == pytest.approx(rho_prime(1.5, NOISY, 1.0), rel=1e-9)


def test_recycled_inner_matches_numeric_integral():
    x, lo, c = 1.7, 0.4, 2.9
    numeric, _ = integrate.quad(lambda y: (c - y) ** 2 * math.exp(-y / x) / x, lo, c)
    assert NOISY.recycled_inner(x, lo, c) == pytest.approx(numeric, rel=1e-10)
    assert NOISY.recycled_inner(x, c, c) == 0.0


def test_conditional_expectation_of_the_prediction():
    assert NOISY.conditional_expectation(lambda y: y, 2.5, QuadratureSpec()) == pytest.approx(2.5, rel=1e-6)
    assert PERFECT.conditional_expectation(lambda y: y * y, 2.5, QuadratureSpec()) == pytest.approx(6.25)


def test_tagged_recycled_moment_matches_2d_quadrature():
    one_d = moment_old1_sq(1.0, 0.5, NOISY)
    two_d = moment_old1_sq_2d(1.0, 0.5, NOISY)
    assert one_d == pytest.approx(two_d, rel=1e-4)
    with pytest.raises(DomainError):
        moment_old1_sq_2d(1.0, 0.5, PERFECT)


@pytest.mark.parametrize("scheme", ['adaptive-simpson', 'gauss-legendre'])
def test_quadrature_schemes_agree(scheme):
    quad = QuadratureSpec(scheme=scheme)
    reference = QuadratureSpec()
    for r in (0.3, 1.0, 3.0):
        assert rho_prime(r, NOISY, 0.7, quad) == pytest.approx(rho_prime(r, NOISY, 0.7, reference), rel=1e-5)
        assert moment_old0_sq(r, NOISY, quad) == pytest.approx(moment_old0_sq(r, NOISY, reference), rel=1e-5)


def test_adaptive_simpson_integrates_a_kink():
    quad = QuadratureSpec(scheme='adaptive-simpson', abs_tol=1e-12)
    value = integrate_1d(lambda x: abs(x - 0.3), 0.0, 1.0, quad, points=[0.3])
    assert value == pytest.approx(0.045 + 0.245, abs=1e-10)


@pytest.mark.parametrize("pair,r,a0", [(NOISY, 0.8, 0.2), (NOISY, 2.0, 1.0), (PERFECT, 1.2, 0.6)])
def test_moments_match_monte_carlo(pair, r, a0):
    estimates = monte_carlo_terms(pair, 0.7, r, a0, 200000, np.random.default_rng(31))
    analytic = {
        'rho_prime': rho_prime(r, pair, 0.7),
        'm_old0_sq': moment_old0_sq(r, pair),
        'm_old1_sq': moment_old1_sq(r, a0, pair),
    }
    for name, (mean, stderr) in estimates.items():
        assert abs(mean - analytic[name]) <= 5 * stderr + 1e-12, name


def test_fcfs_through_the_rank_formula():
    # M/M/1 FCFS at load 0.5: waiting 1, so E[T(x)] = 1 + x
    assert soap_mean_response(fcfs_terms(PERFECT), 0.5, 1.0) == pytest.approx(2.0)
    assert soap_mean_response(fcfs_terms(PERFECT), 0.5, 3.0) == pytest.approx(4.0)


@pytest.mark.parametrize("C", [0.0, 0.3, 1.0])
def test_rank_formula_agrees_with_direct_formula(C):
    x, r, lam = 1.3, 0.9, 0.6
    direct = mean_response(x, r, C, lam, NOISY)
    generic = soap_mean_response(sprpt_lp_terms(r, C, NOISY), lam, x)
    assert generic == pytest.approx(direct, rel=1e-6)


@pytest.mark.parametrize("x", [0.2, 1.0, 3.0])
def test_own_threshold_at_full_preemption_is_srpt(x):
    limited = mean_response(x, x, 1.0, 0.7, PERFECT, threshold='own')
    assert limited == pytest.approx(srpt_mean_response(x, 0.7, PERFECT), rel=1e-5)


def test_light_traffic_response_is_the_size():
    assert mean_response(2.0, 1.5, 0.5, 1e-7, NOISY) == pytest.approx(2.0, rel=1e-5)
    assert mean_response(2.0, 1.5, 0.5, 0.0, NOISY) == pytest.approx(2.0, rel=1e-9)


def test_unstable_load_raises():
    with pytest.raises(InstabilityError):
        mean_response(1.0, 5.0, 0.5, 1.2, PERFECT)
    with pytest.raises(InstabilityError):
        soap_mean_response(fcfs_terms(PERFECT), 1.0, 1.0)
    with pytest.raises(InstabilityError):
        ResponseTimeTable(0.5, 1.1, PERFECT)


def test_invalid_inputs_raise():
    with pytest.raises(DomainError):
        mean_response(1.0, 1.0, 1.5, 0.5, NOISY)
    with pytest.raises(DomainError):
        rho_prime(1.0, NOISY, -0.1)
    with pytest.raises(DomainError):
        moment_old1_sq(1.0, 0.5, NOISY, threshold='median')
    with pytest.raises(DomainError):
        moment_old1_sq(1.0, 0.5, NOISY, threshold='own')


def test_table_interpolates_the_direct_formula():
    table = ResponseTimeTable(0.5, 0.6, NOISY)
    for x, r in [(0.5, 0.7), (1.5, 1.0), (3.0, 2.5)]:
        assert float(table.response(x, r)) == pytest.approx(mean_response(x, r, 0.5, 0.6, NOISY), rel=5e-3)


def test_perfect_table_conditional_mean_uses_the_true_size():
    table = ResponseTimeTable(1.0, 0.5, PERFECT, threshold='own')
    assert table.conditional_mean(1.0) == pytest.approx(float(table.response(1.0, 1.0)))
    curve = table.curve(points=15)
    assert list(curve.columns) == ['x', 'mean_response']
    assert curve['mean_response'].is_monotonic_increasing


def test_aggregate_light_traffic_is_the_mean_size():
    result = mean_response_aggregate(0.5, 1e-6, NOISY, QuadratureSpec(table_points=200), curve_points=10)
    assert result.mean == pytest.approx(1.0, rel=1e-3)
    assert len(result.curve) == 10


@pytest.mark.parametrize("service", [EXP1, ServiceDist(kind='bounded-pareto', shape=1.2, lo=1.0, hi=50.0)],
                         ids=['exponential', 'bounded-pareto'])
def test_service_density_integrates_to_one(service):
    quad = QuadratureSpec()
    pair = DensityPair(service, 'exponential')
    lo, hi = pair.x_support(quad)
    assert integrate_1d(lambda x: float(pair.f(x)), lo, hi, quad) == pytest.approx(1.0, abs=1e-6)


def test_joint_density_integrates_to_one():
    hi = NOISY.x_upper(QuadratureSpec())
    total, _ = integrate.dblquad(lambda y, x: float(NOISY.g(x, y)), 0.0, hi, 0.0, lambda x: 60.0 * x)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_joint_density_marginal_is_the_service_density(x):
    marginal, _ = integrate.quad(lambda y: float(NOISY.g(x, y)), 0.0, np.inf)
    assert marginal == pytest.approx(float(NOISY.f(x)), rel=1e-7)


def test_aggregate_response_grows_with_load():
    quad = QuadratureSpec(table_points=200)
    means = [mean_response_aggregate(0.5, lam, NOISY, quad, curve_points=5).mean for lam in (0.2, 0.4, 0.6)]
    assert means == sorted(means)


@pytest.mark.slow
def test_aggregate_at_full_preemption_matches_srpt():
    quad = QuadratureSpec()
    aggregate = mean_response_aggregate(1.0, 0.5, PERFECT, quad, threshold='own', curve_points=10).mean
    lo, hi = PERFECT.x_support(quad)
    srpt = integrate_1d(lambda x: float(EXP1.pdf(x)) * srpt_mean_response(x, 0.5, PERFECT, quad), lo, hi, quad)
    assert aggregate == pytest.approx(srpt, rel=5e-3)


@pytest.mark.slow
def test_aggregate_is_finite_across_thresholds():
    quad = QuadratureSpec(table_points=300)
    means = {C: mean_response_aggregate(C, 0.8, NOISY, quad, curve_points=5).mean for C in (0.0, 0.5, 1.0)}
    assert all(math.isfinite(v) and v > 1.0 for v in means.values())


@pytest.mark.slow
def test_full_preemption_beats_none_with_perfect_predictions():
    quad = QuadratureSpec(table_points=300)
    full = mean_response_aggregate(1.0, 0.8, PERFECT, quad, curve_points=5).mean
    none = mean_response_aggregate(0.0, 0.8, PERFECT, quad, curve_points=5).mean
    assert full <= none

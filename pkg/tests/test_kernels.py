"""Special-function kernels against high-precision and quadrature oracles."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from capfolio import kernels
from capfolio.errors import DomainError, TargetOutOfRange

# Standard normal CDF at 64 fixed probes, frozen from a 50-digit
# arbitrary-precision evaluation and rounded to the nearest double.
_PHI_TABLE = [
    (-8.0, 6.220960574271784e-16),
    (-7.703703703703704, 6.608906554744675e-15),
    (-7.407407407407407, 6.439617242243066e-14),
    (-7.111111111111111, 5.755620834873267e-13),
    (-6.814814814814815, 4.719263406649425e-12),
    (-6.518518518518519, 3.5502586309973055e-11),
    (-6.222222222222222, 2.4508105073986857e-10),
    (-5.925925925925926, 1.5527127830881854e-09),
    (-5.62962962962963, 9.02984997284803e-09),
    (-5.333333333333334, 4.821303365114105e-08),
    (-5.037037037037037, 2.363966623189092e-07),
    (-4.7407407407407405, 1.0646913451288307e-06),
    (-4.444444444444445, 4.405963702589195e-06),
    (-4.148148148148149, 1.6758774242052274e-05),
    (-3.851851851851852, 5.8613969991680845e-05),
    (-3.5555555555555554, 0.00018859061491912903),
    (-3.2592592592592595, 0.0005585176905233222),
    (-2.9629629629629637, 0.0015234661419998496),
    (-2.666666666666667, 0.003830380567589732),
    (-2.3703703703703702, 0.008885137067733317),
    (-2.0740740740740744, 0.019036215977654803),
    (-1.7777777777777786, 0.037720179813400166),
    (-1.4814814814814818, 0.06923915803341024),
    (-1.1851851851851851, 0.1179721180612391),
    (-0.8888888888888893, 0.18703139874544114),
    (-0.5925925925925934, 0.2767269188077989),
    (-0.2962962962962967, 0.38350190708293186),
    (0.0, 0.5),
    (0.29629629629629584, 0.6164980929170678),
    (0.5925925925925917, 0.7232730811922005),
    (0.8888888888888893, 0.8129686012545588),
    (1.1851851851851851, 0.8820278819387609),
    (1.481481481481481, 0.9307608419665896),
    (1.7777777777777768, 0.9622798201865997),
    (2.0740740740740726, 0.9809637840223451),
    (2.3703703703703702, 0.9911148629322667),
    (2.666666666666666, 0.9961696194324102),
    (2.962962962962962, 0.9984765338580002),
    (3.2592592592592595, 0.9994414823094767),
    (3.5555555555555554, 0.9998114093850808),
    (3.851851851851851, 0.9999413860300084),
    (4.148148148148147, 0.999983241225758),
    (4.444444444444443, 0.9999955940362975),
    (4.7407407407407405, 0.9999989353086549),
    (5.037037037037036, 0.9999997636033376),
    (5.333333333333332, 0.9999999517869663),
    (5.62962962962963, 0.99999999097015),
    (5.925925925925926, 0.9999999984472873),
    (6.222222222222221, 0.9999999997549189),
    (6.518518518518517, 0.9999999999644974),
    (6.814814814814813, 0.9999999999952808),
    (7.111111111111111, 0.9999999999994245),
    (7.4074074074074066, 0.9999999999999356),
    (7.703703703703702, 0.9999999999999933),
    (8.0, 0.9999999999999993),
    (-37.5, 4.605353009581955e-308),
    (-30.0, 4.906713927148187e-198),
    (-17.25, 5.594968394904885e-67),
    (-12.0, 1.776482112077679e-33),
    (0.00015, 0.5000598413418358),
    (12.0, 1.0),
    (17.25, 1.0),
    (30.0, 1.0),
    (37.5, 1.0),
]

_CTX = kernels.PartialMomentContext(m0=-0.14, nu0=0.4)


def test_normal_cdf_against_frozen_reference():
    for y, ref in _PHI_TABLE:
        assert abs(kernels.std_normal_cdf(y) - ref) <= 1e-14, y


def test_normal_cdf_vectorized_matches_scalar():
    ys = np.array([y for y, _ in _PHI_TABLE])
    refs = np.array([v for _, v in _PHI_TABLE])
    np.testing.assert_allclose(kernels.std_normal_cdf(ys), refs, atol=1e-14)


def test_normal_cdf_deep_tail_relative_accuracy():
    # erfc keeps ~1e-13 relative accuracy far into the left tail
    for y, ref in _PHI_TABLE:
        if ref > 0.0 and y < -4.0:
            assert abs(kernels.std_normal_cdf(y) / ref - 1.0) < 1e-12


def test_quantile_round_trip():
    for y in np.linspace(-5.0, 5.0, 41):
        p = kernels.std_normal_cdf(y)
        assert kernels.std_normal_quantile(p) == pytest.approx(y, abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.4, math.nan])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        kernels.std_normal_quantile(p)


def test_pdf_values():
    assert kernels.std_normal_pdf(0.0) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi), rel=1e-15
    )
    assert kernels.std_normal_pdf(2.0) == pytest.approx(
        math.exp(-2.0) / math.sqrt(2.0 * math.pi), rel=1e-14
    )


def _quad_truncated(a, mu, v, dcut):
    def integrand(y):
        return math.exp(a * y) * math.exp(-0.5 * ((y - mu) / v) ** 2) / (
            v * math.sqrt(2.0 * math.pi)
        )

    lo = mu - 12.0 * max(v, v * abs(a) * v)
    val, err = quad(integrand, min(lo, dcut - 1.0), dcut, limit=400)
    return val, err


def test_truncated_exp_moment_against_quadrature():
    rng = np.random.default_rng(42)
    for _ in range(60):
        a = rng.uniform(-3.0, 3.0)
        mu = rng.uniform(-2.0, 2.0)
        v = rng.uniform(0.05, 2.0)
        dcut = mu + rng.uniform(-3.5, 3.5) * v
        want, err = _quad_truncated(a, mu, v, dcut)
        got = kernels.truncated_exp_moment(a, mu, v, dcut)
        assert abs(got - want) <= max(1e-9, 20.0 * err), (a, mu, v, dcut)


def test_truncated_exp_moment_limits():
    full = math.exp(0.3 * 0.1 + 0.5 * 0.3**2 * 0.5**2)
    assert kernels.truncated_exp_moment(0.3, 0.1, 0.5, math.inf) == pytest.approx(
        full, rel=1e-15
    )
    assert kernels.truncated_exp_moment(0.3, 0.1, 0.5, -math.inf) == 0.0
    # a = 0 reduces to the plain CDF
    assert kernels.truncated_exp_moment(0.0, 0.1, 0.5, 0.6) == pytest.approx(
        kernels.std_normal_cdf(1.0), rel=1e-15
    )


def test_truncated_exp_moment_point_mass():
    assert kernels.truncated_exp_moment(2.0, 0.3, 0.0, 0.4) == pytest.approx(
        math.exp(0.6), rel=1e-15
    )
    assert kernels.truncated_exp_moment(2.0, 0.3, 0.0, 0.2) == 0.0
    with pytest.raises(DomainError):
        kernels.truncated_exp_moment(1.0, 0.0, -0.1, 0.0)


def test_truncated_exp_moment_broadcasts():
    cuts = np.array([-math.inf, 0.0, 1.0, math.inf])
    out = kernels.truncated_exp_moment(1.0, 0.0, 1.0, cuts)
    assert out.shape == (4,)
    assert out[0] == 0.0
    assert np.all(np.diff(out) > 0.0)


def test_context_rejects_degenerate_sd():
    with pytest.raises(DomainError):
        kernels.PartialMomentContext(m0=0.0, nu0=0.0)
    with pytest.raises(DomainError):
        kernels.PartialMomentContext(m0=0.0, nu0=-0.4)


def test_context_mean_and_standardize():
    assert _CTX.mean == pytest.approx(math.exp(-0.14 + 0.08), rel=1e-15)
    assert _CTX.standardize(math.exp(-0.14)) == pytest.approx(0.0, abs=1e-15)
    assert _CTX.standardize(math.exp(-0.14 + 0.4)) == pytest.approx(1.0, rel=1e-12)


def test_partial_moment_h_is_cdf_at_p0():
    for y in [0.2, 0.8, 1.0, 1.5]:
        want = kernels.std_normal_cdf(_CTX.standardize(y))
        assert kernels.partial_moment_H(_CTX, 0.0, y) == pytest.approx(
            want, rel=1e-14
        )


def test_partial_moment_h_full_moments():
    for p in [0.0, 1.0, 2.0, 3.0]:
        want = math.exp(p * _CTX.m0 + 0.5 * p * p * _CTX.nu0**2)
        assert kernels.partial_moment_H(_CTX, p, math.inf) == pytest.approx(
            want, rel=1e-14
        )


def test_partial_moment_h_against_quadrature():
    def integrand(u, p):
        # z = e^{m0 + nu0 u}, standard normal density in u
        return math.exp(p * (_CTX.m0 + _CTX.nu0 * u)) * math.exp(-0.5 * u * u) / (
            math.sqrt(2.0 * math.pi)
        )

    for p in [0.5, 1.0, 2.0]:
        for y in [0.5, 0.9, 1.2]:
            cut = _CTX.standardize(y)
            want, err = quad(integrand, -14.0, cut, args=(p,), limit=300)
            got = kernels.partial_moment_H(_CTX, p, y)
            assert abs(got - want) <= max(1e-11, 20.0 * err)


def test_partial_moment_domains():
    with pytest.raises(DomainError):
        kernels.partial_moment_H(_CTX, -0.5, 1.0)
    with pytest.raises(DomainError):
        kernels.partial_moment_H(_CTX, 1.0, 0.0)
    with pytest.raises(DomainError):
        kernels.partial_moment_K(_CTX, 0.0, 1.0)
    with pytest.raises(DomainError):
        kernels.partial_moment_K(_CTX, 1.0, -2.0)
    with pytest.raises(DomainError):
        kernels.partial_moment_J(_CTX, -1.0, 1.0)
    with pytest.raises(DomainError):
        kernels.partial_moment_J(_CTX, 1.0, 0.0)


def test_k_and_j_monotone_with_correct_limits():
    grid = np.geomspace(0.05, 40.0, 120)
    for p in [0.5, 1.0, 2.0]:
        kv = [kernels.partial_moment_K(_CTX, p, y) for y in grid]
        jv = [kernels.partial_moment_J(_CTX, p, y) for y in grid]
        assert all(v >= -1e-15 for v in kv)
        assert all(b >= a - 1e-12 for a, b in zip(kv, kv[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(jv, jv[1:]))
        assert kv[-1] < _CTX.mean
        assert jv[-1] < 1.0
    assert kernels.partial_moment_K(_CTX, 1.0, math.inf) == _CTX.mean
    assert kernels.partial_moment_J(_CTX, 1.0, math.inf) == 1.0


def test_invert_h1_round_trip():
    for y0 in [0.3, 0.7, 0.95, 1.3, 2.5]:
        target = kernels.partial_moment_H(_CTX, 1.0, y0)
        assert kernels.invert_H1(_CTX, target) == pytest.approx(y0, rel=1e-9)


def test_invert_k_round_trip():
    for p in [0.5, 1.0, 2.0]:
        for y0 in [0.4, 0.9, 1.8]:
            target = kernels.partial_moment_K(_CTX, p, y0)
            assert kernels.invert_K(_CTX, p, target) == pytest.approx(y0, rel=1e-9)


def test_invert_rejects_out_of_range_targets():
    with pytest.raises(TargetOutOfRange):
        kernels.invert_H1(_CTX, 0.0)
    with pytest.raises(TargetOutOfRange):
        kernels.invert_H1(_CTX, _CTX.mean)
    with pytest.raises(TargetOutOfRange):
        kernels.invert_K(_CTX, 1.0, -0.5)
    with pytest.raises(TargetOutOfRange):
        kernels.invert_K(_CTX, 2.0, _CTX.mean * 1.01)


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-2.5, 2.5),
    mu=st.floats(-1.5, 1.5),
    v=st.floats(0.05, 1.5),
    d1=st.floats(-4.0, 4.0),
    width=st.floats(0.0, 3.0),
)
def test_truncated_moment_monotone_in_cut(a, mu, v, d1, width):
    lo = kernels.truncated_exp_moment(a, mu, v, d1)
    hi = kernels.truncated_exp_moment(a, mu, v, d1 + width)
    assert hi >= lo - 1e-13 * max(1.0, abs(hi))


@settings(max_examples=50, deadline=None)
@given(
    m0=st.floats(-1.0, 0.5),
    nu0=st.floats(0.05, 1.2),
    p=st.floats(0.25, 3.0),
    y=st.floats(0.05, 20.0),
)
def test_partial_moment_bounds(m0, nu0, p, y):
    ctx = kernels.PartialMomentContext(m0=m0, nu0=nu0)
    h1 = kernels.partial_moment_H(ctx, 1.0, y)
    assert 0.0 <= h1 <= ctx.mean * (1.0 + 1e-12)
    j = kernels.partial_moment_J(ctx, p, y)
    assert -1e-13 <= j <= 1.0

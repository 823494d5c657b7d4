import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from etasmag.exceptions import ValidationError
from etasmag.magnitudes import (LN10, ConditionalLaw, GrLaw, OmoriLaw, ProductivityLaw,
                                conditional_cdf, conditional_density, conditional_mean,
                                conditional_offspring_matrix, conditional_sample, gr_density,
                                gr_sample, omori, omori_integral, omori_inverse_integral,
                                productivity)

M0 = 1.5


def quad_cdf(law, m_prime, m):
    return integrate.quad(lambda v: conditional_density(v, m_prime, law), law.m0, m,
                          epsabs=1e-13, epsrel=1e-12)[0]


def test_gr_density_values():
    law = GrLaw(LN10, M0)
    assert gr_density(M0, law) == pytest.approx(2.302585, abs=1e-6)
    assert gr_density(M0 + math.log(2) / LN10, law) == pytest.approx(LN10 / 2, rel=1e-14)
    total = integrate.quad(lambda m: gr_density(m, law), M0, M0 + 30, epsabs=1e-13)[0]
    assert total == pytest.approx(1.0, abs=1e-9)


def test_gr_density_rejects_below_m0():
    with pytest.raises(ValidationError):
        gr_density(M0 - 0.1, GrLaw(LN10, M0))


def test_gr_sample_inverse():
    law = GrLaw(2.0, M0)
    assert gr_sample(1e-15, law) == pytest.approx(M0, abs=1e-12)
    assert gr_sample(1 - math.exp(-2.0), law) == pytest.approx(M0 + 1, abs=1e-12)
    with pytest.raises(ValidationError):
        gr_sample(1.0, law)
    with pytest.raises(ValidationError):
        gr_sample(0.0, law)


def test_gr_sample_ks():
    law = GrLaw(LN10, M0)
    u = np.random.default_rng(7).random(100_000)
    m = gr_sample(u, law)
    assert stats.kstest(m - M0, stats.expon(scale=1 / LN10).cdf).pvalue > 0.01


def test_conditional_reduces_to_gr():
    law = ConditionalLaw(LN10, 1.0, 0.0, M0)
    m = np.linspace(M0, M0 + 5, 101)
    for mp in (M0, M0 + 2.5, M0 + 6):
        assert np.array_equal(conditional_density(m, mp, law), gr_density(m, law.gr))


def test_conditional_at_origin():
    law = ConditionalLaw(LN10, 1.72, 0.8, M0)
    assert conditional_density(M0, M0, law) == pytest.approx(LN10 * 1.8, rel=1e-14)


@pytest.mark.parametrize("c1", [0.0, 0.3, 0.8, 0.99])
def test_conditional_normalisation(c1):
    law = ConditionalLaw(LN10, 1.72, c1, M0)
    for mp in M0 + np.arange(7):
        assert quad_cdf(law, mp, M0 + 30) == pytest.approx(1.0, abs=1e-9)


def test_conditional_cdf_matches_quadrature():
    law = ConditionalLaw(LN10, 0.83, 0.8, M0)
    for mp in (M0, 2.7, 5.0):
        for m in (1.6, 2.0, 3.3):
            assert conditional_cdf(m, mp, law) == pytest.approx(quad_cdf(law, mp, m), abs=1e-12)


def test_conditional_law_validation():
    with pytest.raises(ValidationError):
        ConditionalLaw(LN10, 2.5, 0.5, M0)  # beta <= a
    with pytest.raises(ValidationError):
        ConditionalLaw(LN10, 1.0, 1.0, M0)
    with pytest.raises(ValidationError):
        ConditionalLaw(LN10, 1.0, -0.1, M0)


def test_stochastic_dominance_grid():
    law = ConditionalLaw(LN10, 1.2, 0.8, M0)
    m = np.linspace(M0, M0 + 4, 81)
    mps = np.linspace(M0, M0 + 6, 25)
    cdfs = np.array([conditional_cdf(m, mp, law) for mp in mps])
    assert np.all(np.diff(cdfs, axis=0) <= 1e-15)


def test_mean_monotone_and_matches_quadrature():
    law = ConditionalLaw(LN10, 1.2, 0.8, M0)
    mps = np.linspace(M0, M0 + 6, 13)
    quad_means = [integrate.quad(lambda v: v * conditional_density(v, mp, law), M0, M0 + 30,
                                 epsabs=1e-12)[0] for mp in mps]
    assert np.all(np.diff(quad_means) >= 0)
    assert np.allclose(conditional_mean(mps, law), quad_means, atol=1e-9)


def test_conditional_sample_reduction_and_origin():
    law0 = ConditionalLaw(LN10, 1.0, 0.0, M0)
    u = np.random.default_rng(1).random(1000)
    assert np.array_equal(conditional_sample(u, 3.0, law0), gr_sample(u, law0.gr))
    law = ConditionalLaw(LN10, 1.0, 0.8, M0)
    assert conditional_sample(1e-15, 4.0, law) == pytest.approx(M0, abs=1e-12)


@pytest.mark.parametrize("m_prime,c1", [(1.5, 0.8), (3.0, 0.8), (5.0, 0.5)])
def test_conditional_sample_ks(m_prime, c1):
    law = ConditionalLaw(LN10, 1.0, c1, M0)
    u = np.random.default_rng(11).random(100_000)
    draws = conditional_sample(u, m_prime, law)
    # quadrature CDF on a fine grid, interpolated, as the KS reference
    grid = np.linspace(M0, M0 + 12, 4001)
    ref = np.array([0.0] + [quad_cdf(law, m_prime, g) for g in grid[1:]])
    assert stats.kstest(draws, lambda m: np.interp(m, grid, ref)).pvalue > 0.01


def test_sampler_histogram_bands():
    law = ConditionalLaw(LN10, 1.2, 0.8, M0)
    m_prime = 3.5
    draws = conditional_sample(np.random.default_rng(3).random(1_000_000), m_prime, law)
    edges = np.linspace(M0, M0 + 3, 31)
    counts, _ = np.histogram(draws, edges)
    probs = np.array([quad_cdf(law, m_prime, b) - quad_cdf(law, m_prime, a)
                      for a, b in zip(edges[:-1], edges[1:])])
    expected = probs * draws.size
    sigma = np.sqrt(draws.size * probs * (1 - probs))
    assert np.all(np.abs(counts - expected) <= 3 * sigma + 1)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(1e-12, 1 - 1e-12), mp=st.floats(M0, M0 + 8), c1=st.floats(0, 0.999))
def test_sample_inverts_cdf(u, mp, c1):
    law = ConditionalLaw(LN10, 1.3, c1, M0)
    m = conditional_sample(u, mp, law)
    assert conditional_cdf(m, mp, law) == pytest.approx(u, abs=1e-9)


def test_productivity_values():
    assert productivity(M0, ProductivityLaw(0.3, 1.0, M0)) == pytest.approx(0.3)
    assert productivity(M0 + 1, ProductivityLaw(0.3, math.log(2), M0)) == pytest.approx(0.6)
    assert productivity(M0 + 2, ProductivityLaw(0.02, 1.72, M0)) == pytest.approx(0.02 * math.exp(3.44))


def test_omori_values_and_integral():
    law = OmoriLaw(0.013, 1.11)
    assert omori(0.0, law) == pytest.approx(0.013 ** -1.11)
    assert omori(1 - 0.2, OmoriLaw(0.2, 1.0)) == pytest.approx(1.0)
    total = integrate.quad(lambda t: omori(t, law), 0, np.inf, limit=500)[0]
    assert total == pytest.approx(0.013 ** -0.11 / 0.11, rel=1e-6)
    with pytest.raises(ValidationError):
        omori(-1.0, law)


@pytest.mark.parametrize("p", [0.8879, 1.0, 1.0 + 1e-12, 1.11, 1.39])
def test_omori_integral_and_inverse(p):
    c = 0.013
    for t in (0.0, 1e-4, 0.5, 30.0, 1000.0):
        ref = integrate.quad(lambda s: (s + c) ** -p, 0, t, epsabs=0, epsrel=1e-12, limit=200)[0]
        assert omori_integral(t, c, p) == pytest.approx(ref, rel=1e-9, abs=1e-15)
        assert omori_inverse_integral(omori_integral(t, c, p), c, p) == pytest.approx(t, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("beta,a,c1", [(LN10, 1.72, 0.8), (LN10, 0.83, 0.99), (3.0, 0.5, 0.3)])
def test_conditional_branching_equals_gr(beta, a, c1):
    # leading eigenvalue of the mean-offspring operator vs the GR average
    rho = max(abs(np.linalg.eigvals(conditional_offspring_matrix(beta, a, c1))))
    assert rho == pytest.approx(beta / (beta - a), rel=1e-12)


def test_offspring_matrix_against_quadrature():
    beta, a, c1, mp = LN10, 1.2, 0.6, 3.1
    law = ConditionalLaw(beta, a, c1, 0.0)
    M = conditional_offspring_matrix(beta, a, c1)
    xp = mp
    for k, gam in enumerate((a, 2 * a - beta)):
        direct = integrate.quad(lambda x: conditional_density(x, mp, law) * math.exp(gam * x),
                                0, 60, limit=200)[0] * math.exp(a * xp)
        via_basis = M[0, k] * math.exp(a * xp) + M[1, k] * math.exp((2 * a - beta) * xp)
        assert direct == pytest.approx(via_basis, rel=1e-9)

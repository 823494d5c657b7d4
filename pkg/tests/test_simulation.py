import math

import numpy as np
import pytest

from etasmag.catalog import BACKGROUND, catalog_to_text
from etasmag.etas import EtasParams
from etasmag.exceptions import SupercriticalError, ValidationError
from etasmag.magnitudes import ConditionalLaw, GrLaw, omori_integral
from etasmag.simulation import SimConfig, check_subcritical, simulate

CLASSIC = EtasParams(0.62, 0.02, 0.013, 1.72, 1.11)
GR = GrLaw(m0=1.5)


def test_poisson_count_band():
    par = CLASSIC.replace(kappa=1e-12)
    counts = np.array([len(simulate(SimConfig(par, GR, (0.0, 1000.0), seed=s))) for s in range(100)])
    assert abs(counts.mean() - 620) <= 3 * math.sqrt(620 / 100)
    assert np.all(np.abs(counts - 620) <= 5 * math.sqrt(620))


def test_determinism():
    cfg = SimConfig(CLASSIC, GR, (0.0, 500.0), seed=42)
    assert catalog_to_text(simulate(cfg)) == catalog_to_text(simulate(cfg))
    other = SimConfig(CLASSIC, GR, (0.0, 500.0), seed=43)
    assert catalog_to_text(simulate(other)) != catalog_to_text(simulate(cfg))


def test_offspring_mean_matches_analytic():
    # long window so the truncated Omori integral is close to the full one;
    # count the direct children of every event older than 10^5 days before the end
    par = EtasParams(0.05, 0.02, 0.013, 1.0, 1.4)
    cat = simulate(SimConfig(par, GR, (0.0, 3.0e5), seed=5))
    horizon = 3.0e5 - cat.times
    eligible = np.flatnonzero(horizon > 1.0e5)
    children = np.bincount(cat.parent[cat.parent >= 0], minlength=len(cat))[eligible]
    x = cat.magnitudes[eligible] - 1.5
    expected = par.kappa * np.exp(par.a * x) * omori_integral(horizon[eligible], par.c, par.p)
    analytic_full = par.kappa * np.exp(par.a * x) * par.c ** (1 - par.p) / (par.p - 1)
    assert np.allclose(expected, analytic_full, rtol=3e-3)
    assert eligible.size >= 10_000
    # Poisson counts: the standardised total is approximately N(0, 1)
    for mean in (expected, analytic_full):
        z = (children.sum() - mean.sum()) / math.sqrt(mean.sum())
        assert abs(z) < 3


def test_invariants_gr_mode():
    cat = simulate(SimConfig(CLASSIC, GR, (10.0, 1010.0), seed=1))
    assert np.all(cat.magnitudes >= 1.5)
    assert cat.times[0] >= 10.0 and cat.times[-1] <= 1010.0
    linked = cat.parent >= 0
    assert np.all(cat.parent[linked] < np.flatnonzero(linked))
    assert np.all(cat.times[cat.parent[linked]] <= cat.times[linked])
    assert np.all((cat.parent >= 0) | (cat.parent == BACKGROUND))
    # realised mean offspring per event stays below one
    assert np.count_nonzero(linked) / len(cat) < 1


def _parent_child_correlation(cat):
    linked = np.flatnonzero(cat.parent >= 0)
    return np.corrcoef(cat.magnitudes[cat.parent[linked]], cat.magnitudes[linked])[0, 1], linked.size


def test_magnitude_correlation_by_mode():
    par = EtasParams(0.58, 0.022, 0.017, 0.83, 1.12)
    law = ConditionalLaw(GR.beta, par.a, 0.8, 1.5)
    r_gr, n_gr = _parent_child_correlation(simulate(SimConfig(par, GR, (0.0, 40000.0), seed=9)))
    r_c, n_c = _parent_child_correlation(
        simulate(SimConfig(par, GR, (0.0, 40000.0), seed=9, conditional=law)))
    assert n_gr >= 10_000 and n_c >= 10_000
    assert abs(r_gr) < 3 / math.sqrt(n_gr)
    assert r_c > 3 / math.sqrt(n_c)


def test_conditional_with_zero_c1_matches_gr_in_distribution():
    law = ConditionalLaw(GR.beta, CLASSIC.a, 0.0, 1.5)
    cfg = SimConfig(CLASSIC, GR, (0.0, 300.0), seed=4)
    a = simulate(cfg)
    b = simulate(SimConfig(CLASSIC, GR, (0.0, 300.0), seed=4, conditional=law))
    # c1 = 0 samples exactly like GR from the same uniforms
    assert a.same_as(b)


def test_supercritical_refused():
    hot = CLASSIC.replace(kappa=0.05)
    with pytest.raises(SupercriticalError, match="branching ratio"):
        simulate(SimConfig(hot, GR, (0.0, 1000.0)))
    with pytest.raises(SupercriticalError):
        check_subcritical(SimConfig(CLASSIC, GrLaw(1.5, 1.5), (0.0, 1000.0)))


def test_classic_tuple_accepted():
    n_star = check_subcritical(SimConfig(CLASSIC, GR, (0.0, 1000.0)))
    assert 0.8 < n_star < 0.85


def test_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(CLASSIC, GR, (5.0, 5.0))
    with pytest.raises(ValidationError):
        SimConfig(CLASSIC, GR, (0.0, 10.0), learning_period=10.0)
    with pytest.raises(ValidationError):
        SimConfig(CLASSIC, GR, conditional=ConditionalLaw(GR.beta, 1.0, 0.8, 1.5))
    cfg = SimConfig(CLASSIC, GR, conditional=ConditionalLaw(GR.beta, 1.72, 0.8, 1.5))
    assert cfg.magnitude_mode == "CONDITIONAL"


def test_event_budget():
    with pytest.raises(SupercriticalError, match="exceeded"):
        simulate(SimConfig(CLASSIC, GR, (0.0, 1000.0), max_events=50))

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from etasmag.exceptions import ValidationError
from etasmag.kde import (FrequencyTable, MagnitudeKDE, estimate_density, frequency_table,
                         loo_predictions, loocv_bandwidth, magnitude_grid)


def naive_estimate(ms, fs, grid, gamma):
    out = []
    for m in grid:
        num = den = 0.0
        for mi, fi in zip(ms, fs):
            k = math.exp(-0.5 * ((m - mi) / gamma) ** 2)
            num += fi * k
            den += k
        out.append(num / den)
    return np.array(out)


def naive_scores(ms, fs, candidates):
    scores = []
    for g in candidates:
        total = 0.0
        for i in range(len(ms)):
            num = den = 0.0
            for j in range(len(ms)):
                if j != i:
                    k = math.exp(-0.5 * ((ms[i] - ms[j]) / g) ** 2)
                    num += fs[j] * k
                    den += k
            total += abs(num / den - fs[i])
        scores.append(total)
    return np.array(scores)


def random_table(rng, n=25):
    ms = np.round(1.5 + np.sort(rng.choice(60, n, replace=False)) * 0.1, 1)
    return FrequencyTable(ms, rng.integers(1, 50, n).astype(float))


def test_constant_frequencies():
    table = FrequencyTable(np.array([1.5, 1.6, 2.0, 3.1]), np.full(4, 7.0))
    est = estimate_density(table, magnitude_grid(1.5, 3.1), 0.2)
    assert np.allclose(est.values, 7.0, rtol=0, atol=1e-12)
    assert est.grid.size == 1000


def test_two_point_symmetry():
    table = FrequencyTable(np.array([2.0, 3.0]), np.array([4.0, 10.0]))
    assert estimate_density(table, [2.5], 0.3).values[0] == pytest.approx(7.0, rel=1e-15)


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(5):
        table = random_table(rng)
        grid = np.sort(rng.uniform(1.0, 8.0, 200))
        gamma = rng.uniform(0.05, 1.0)
        got = estimate_density(table, grid, gamma).values
        ref = naive_estimate(table.magnitudes, table.frequencies, grid, gamma)
        assert np.allclose(got, ref, rtol=1e-12, atol=0)


def test_loocv_scores_match_brute_force():
    rng = np.random.default_rng(1)
    cands = np.geomspace(0.05, 1.5, 20)
    for _ in range(5):
        table = random_table(rng, 15)
        best, scores = loocv_bandwidth(table, cands)
        ref = naive_scores(table.magnitudes, table.frequencies, cands)
        assert np.allclose(scores, ref, rtol=1e-12, atol=0)
        assert best == cands[int(np.argmin(ref))]


def test_loo_excludes_own_frequency():
    table = FrequencyTable(np.array([1.0, 2.0, 3.0]), np.array([1.0, 100.0, 1.0]))
    assert loo_predictions(table, 0.5)[1] == pytest.approx(1.0)


def test_gr_table_selects_interior_bandwidth():
    rng = np.random.default_rng(2)
    mags = 1.5 + rng.exponential(1 / math.log(10), 3000)
    table = frequency_table(mags)
    best, _ = loocv_bandwidth(table)
    assert 0.01 < best < 1.5


def test_tie_goes_to_smaller():
    # far-apart points: every small bandwidth predicts the neighbour's value exactly
    table = FrequencyTable(np.array([0.0, 10.0, 20.0]), np.array([1.0, 2.0, 3.0]))
    best, scores = loocv_bandwidth(table, [0.1, 0.2])
    assert scores[0] == scores[1]
    assert best == 0.1


def test_far_from_data_is_finite():
    table = FrequencyTable(np.array([1.5, 1.6]), np.array([3.0, 5.0]))
    est = estimate_density(table, [1.5, 9.0], 0.01)
    assert np.all(np.isfinite(est.values))
    assert est.values[1] == 5.0


def test_frequency_table():
    t = frequency_table([1.51, 1.54, 1.6, 2.349, 2.35])
    assert t.magnitudes.tolist() == [1.5, 1.6, 2.3, 2.4]
    assert t.frequencies.tolist() == [2, 1, 1, 1]
    with pytest.raises(ValidationError):
        frequency_table([2.0, 2.01])


def test_validation():
    with pytest.raises(ValidationError):
        FrequencyTable(np.array([2.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        FrequencyTable(np.array([1.0, 2.0]), np.array([0.0, 1.0]))
    table = FrequencyTable(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 1.0]))
    with pytest.raises(ValidationError):
        estimate_density(table, [1.0], 0.0)
    with pytest.raises(ValidationError):
        loocv_bandwidth(table, [])
    with pytest.raises(ValidationError):
        loocv_bandwidth(table, [0.2, 0.1])
    with pytest.raises(ValidationError):
        loocv_bandwidth(FrequencyTable(np.array([1.0, 2.0]), np.ones(2)), [0.1])


tables = st.lists(st.tuples(st.integers(0, 80), st.integers(1, 500)), min_size=2, max_size=30,
                  unique_by=lambda t: t[0])


def _table(rows):
    rows = sorted(rows)
    return FrequencyTable(1.5 + 0.1 * np.array([r[0] for r in rows]),
                          np.array([r[1] for r in rows], dtype=float))


@settings(max_examples=60, deadline=None)
@given(rows=tables, gamma=st.floats(0.02, 3.0))
def test_bounded_by_data(rows, gamma):
    table = _table(rows)
    vals = estimate_density(table, magnitude_grid(1.5, 9.5, 200), gamma).values
    f = table.frequencies
    assert np.all(vals >= f.min() - 1e-9 * f.max()) and np.all(vals <= f.max() * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(rows=tables, gamma=st.floats(0.05, 2.0), shift=st.floats(-3, 3), scale=st.floats(1.0, 10))
def test_shift_and_scale(rows, gamma, shift, scale):
    table = _table(rows)
    grid = magnitude_grid(1.5, 9.5, 100)
    base = estimate_density(table, grid, gamma).values
    moved = FrequencyTable(table.magnitudes + shift, table.frequencies)
    assert np.allclose(estimate_density(moved, grid + shift, gamma).values, base, rtol=1e-9)
    scaled = FrequencyTable(table.magnitudes, table.frequencies * scale)
    assert np.allclose(estimate_density(scaled, grid, gamma).values, base * scale, rtol=1e-12)


def test_huge_bandwidth_gives_mean_frequency():
    table = random_table(np.random.default_rng(4))
    vals = estimate_density(table, magnitude_grid(1.5, 7.5), 1e6).values
    assert np.allclose(vals, table.frequencies.mean(), rtol=1e-9)


def test_density_csv():
    table = FrequencyTable(np.array([1.5, 1.6]), np.array([3.0, 5.0]))
    text = estimate_density(table, [1.5, 1.55], 0.1).to_csv()
    lines = text.splitlines()
    assert lines[0] == "magnitude,value" and lines[2] == "1.55,4.0"
    m, v = lines[1].split(",")
    assert m == "1.5" and float(v) == estimate_density(table, [1.5], 0.1).values[0]


def test_estimator():
    rng = np.random.default_rng(5)
    mags = 1.5 + rng.exponential(0.43, 500)
    est = MagnitudeKDE()
    assert clone(est).get_params() == {"bandwidth": "loocv", "candidates": None, "resolution": 0.1}
    est.fit(mags)
    assert est.bandwidth_ > 0 and est.cv_scores_.size == 60
    assert est.predict([1.5, 2.0]).shape == (2,)
    fixed = MagnitudeKDE(bandwidth=0.2).fit(mags)
    assert fixed.bandwidth_ == 0.2 and fixed.cv_scores_ is None
    with pytest.raises(ValidationError):
        MagnitudeKDE(bandwidth="silverman").fit(mags)

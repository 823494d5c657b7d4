"""End-to-end analysis of one catalog.

``run_analysis`` chains: optional ETAS fit, optional time rescaling, causal
window selection on the daily counts, the windowed and the mother
analyses, one kernel estimate per subinterval and the trend regressions.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

import etasmag.trend as trend
from . import correlation, kde
from .catalog import UNKNOWN, daily_counts, mean_index_pair_distance
from .etas import EtasParams, attribute_mothers, fit_params, time_rescale

logger = logging.getLogger(__name__)

DEFAULT_INIT = EtasParams(mu=0.5, kappa=0.03, c=0.02, a=1.5, p=1.2)


@dataclass
class AnalysisResult:
    """Outcome of one pairing analysis."""

    name: str
    scheme: trend.SubintervalScheme
    groups: list
    densities: list
    trend: trend.TrendResult

    def summary(self):
        return {
            "intervals": [list(iv) for iv in self.scheme.intervals],
            "group_sizes": [g.size for g in self.groups],
            "trigger_counts": [g.n_triggers for g in self.groups],
            "bandwidths": [d.bandwidth for d in self.densities],
            "trend": self.trend.to_dict(),
        }


@dataclass
class PipelineResult:
    params: EtasParams
    fit_report: object
    delta_star: int
    window_selector: correlation.CausalWindow
    windowed: AnalysisResult
    mother: AnalysisResult
    rescaled: bool
    extras: dict = field(default_factory=dict)

    def summary(self):
        pl = self.window_selector.power_law_
        return {
            "params": self.params.to_dict(),
            "fit": self.fit_report.to_dict() if self.fit_report is not None else None,
            "rescaled": self.rescaled,
            "delta_star": self.delta_star,
            "power_law": {"amplitude": pl.amplitude, "exponent": pl.exponent, "sse": pl.sse,
                          "slope_p_value": pl.slope_p_value},
            "acf_p_values": (None if self.window_selector.p_values_ is None
                             else self.window_selector.p_values_.tolist()),
            "windowed": self.windowed.summary(),
            "mother": self.mother.summary(),
            **self.extras,
        }


def select_window(cat, threshold=0.05):
    """Causal window (days, or rescaled time units) from the catalog's daily counts."""
    return correlation.CausalWindow(threshold=threshold).fit(daily_counts(cat))


def _analyse(name, cat, triggers, groups_fn, manual, grid, bandwidth, candidates, resolution):
    pool = cat.magnitudes[triggers]
    m_range = (cat.m0, float(cat.magnitudes.max()))
    scheme = trend.make_subintervals(pool, manual=manual, m_range=m_range)
    groups = groups_fn(scheme)
    densities = []
    for g in groups:
        est = kde.MagnitudeKDE(bandwidth=bandwidth, resolution=resolution, candidates=candidates)
        est.fit(g.members)
        densities.append(kde.estimate_density(est.table_, grid, est.bandwidth_))
    return AnalysisResult(name, scheme, groups, densities, trend.trend(groups))


def _grid(cat):
    return kde.magnitude_grid(cat.m0, float(cat.magnitudes.max()))


def windowed_analysis(cat, delta_star=None, intervals=None, threshold=0.05, bandwidth="loocv",
                      candidates=None, resolution=kde.DEFAULT_RESOLUTION):
    """Windowed pairing on ``cat`` (original or rescaled times).

    Returns ``(AnalysisResult, CausalWindow, delta_star)``; the window
    selector is fitted even when ``delta_star`` is given, for reporting.
    """
    selector = select_window(cat, threshold)
    dstar = selector.delta_star_ if delta_star is None else delta_star
    starters, _ = trend.window_pairs(cat, dstar)
    result = _analyse("windowed", cat, starters,
                      lambda s: trend.windowed_groups(cat, dstar, s),
                      intervals, _grid(cat), bandwidth, candidates, resolution)
    return result, selector, int(dstar)


def mother_analysis(cat, params, intervals=None, bandwidth="loocv", candidates=None,
                    resolution=kde.DEFAULT_RESOLUTION):
    """Mother pairing by hard attribution.  Returns ``(AnalysisResult, Attribution)``."""
    attribution = attribute_mothers(cat, params)
    mothers, _ = trend.mother_pairs(attribution)
    result = _analyse("mother", cat, mothers,
                      lambda s: trend.mother_groups(cat, attribution, s),
                      intervals, _grid(cat), bandwidth, candidates, resolution)
    return result, attribution


def run_analysis(cat, params=None, init=None, learning_fraction=0.1, rescale=False,
                 delta_star=None, window_intervals=None, mother_intervals=None,
                 bandwidth="loocv", candidates=None, resolution=kde.DEFAULT_RESOLUTION,
                 threshold=0.05):
    """Run both analyses on ``cat``.

    ``params`` skips the fit.  With ``rescale`` the windowed analysis runs
    on the time-changed catalog and the causal window is recomputed there.
    The mother analysis always uses original times.
    """
    report = None
    if params is None:
        report = fit_params(cat, init or DEFAULT_INIT, learning_fraction)
        params = report.params

    window_cat = time_rescale(cat, params) if rescale else cat
    windowed, selector, dstar = windowed_analysis(window_cat, delta_star, window_intervals,
                                                  threshold, bandwidth, candidates, resolution)
    mother, attribution = mother_analysis(cat, params, mother_intervals, bandwidth, candidates,
                                          resolution)

    extras = {"n_events": len(cat), "n_triggered_attributed": attribution.n_triggered,
              "n_window_pairs": int(sum(g.size for g in windowed.groups))}
    if cat.has_locations:
        for res in (windowed, mother):
            trig = np.concatenate([g.triggers for g in res.groups])
            memb = np.concatenate([g.member_index for g in res.groups])
            ok = np.isfinite(cat.latitude[trig]) & np.isfinite(cat.latitude[memb])
            if np.any(ok):
                extras[f"{res.name}_mean_distance_km"] = mean_index_pair_distance(
                    cat, trig[ok], memb[ok])
    if cat.has_parents:
        known = cat.parent != UNKNOWN
        extras["attribution_accuracy"] = float(np.mean(attribution.mother[known] == cat.parent[known]))
    return PipelineResult(params, report, dstar, selector, windowed, mother, rescale, extras)

"""Autocorrelation of daily counts and the causal time window.

The autocorrelation estimator normalises each lag by ``(n - lag)`` and
the unbiased variance, so lag zero is exactly ``(n - 1) / n``.  A power
law ``A * lag**-b`` is then fitted by least squares on the log-log scale
and the window is the last lag at which the fitted model is still at or
above a threshold (0.05 by default).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from ._validation import check_positive
from .catalog import CountSeries
from .exceptions import NumericalError, ValidationError


@dataclass(frozen=True)
class AcfEstimate:
    lags: np.ndarray
    values: np.ndarray
    n: int


@dataclass(frozen=True)
class PowerLawFit:
    amplitude: float
    exponent: float
    sse: float
    lags_used: np.ndarray
    slope_p_value: float = math.nan

    def model(self, lag):
        return self.amplitude * np.asarray(lag, dtype=float) ** (-self.exponent)


def autocorrelation(series, max_lag):
    """Estimate the autocorrelation of ``series`` for lags ``0..max_lag``."""
    x = np.asarray(series.counts if isinstance(series, CountSeries) else series, dtype=float)
    n = x.size
    max_lag = int(max_lag)
    if max_lag < 0 or n < max_lag + 2:
        raise ValidationError(f"need n >= max_lag + 2 (n={n}, max_lag={max_lag})")
    dev = x - x.mean()
    var = dev @ dev / (n - 1)
    if var <= 0:
        raise ValidationError("autocorrelation of a constant series is undefined")
    lags = np.arange(max_lag + 1)
    values = np.array([dev[: n - d] @ dev[d:] for d in lags]) / ((n - lags) * var)
    return AcfEstimate(lags, values, n)


def default_fit_range(n):
    return 1, max(3, min(50, n // 4))


def fit_power_law(acf, lag_range=None):
    """Ordinary least squares of ``log R`` on ``log lag`` over positive values.

    ``sse`` is the residual sum of squares on the log scale.
    """
    lo, hi = default_fit_range(acf.n) if lag_range is None else lag_range
    sel = (acf.lags >= max(lo, 1)) & (acf.lags <= hi) & (acf.values > 0)
    lags, vals = acf.lags[sel].astype(float), acf.values[sel]
    if lags.size < 3:
        raise NumericalError(f"only {lags.size} positive autocorrelation values in lags {lo}..{hi}")
    res = stats.linregress(np.log(lags), np.log(vals))
    amplitude = math.exp(res.intercept)
    if not amplitude > 0 or not math.isfinite(amplitude):
        raise NumericalError("fitted power-law amplitude is not positive")
    resid = np.log(vals) - (res.intercept + res.slope * np.log(lags))
    return PowerLawFit(amplitude, -res.slope, float(resid @ resid), lags.astype(int),
                       float(res.pvalue))


def select_delta_star(fit, threshold=0.05):
    """Smallest lag ``d >= 1`` with the model below ``threshold`` at every lag beyond ``d``."""
    threshold = check_positive(threshold, "threshold")
    if fit.exponent <= 0:
        raise NumericalError("power-law exponent must be positive to cross the threshold")
    crossing = (fit.amplitude / threshold) ** (1.0 / fit.exponent)
    d = max(1, math.floor(crossing))
    # guard the floor against rounding at exact integers
    while d > 1 and not fit.model(d) >= threshold:
        d -= 1
    while not fit.model(d + 1) < threshold:
        d += 1
    return d


def acf_significance(acf, max_lag):
    """Two-sided p-values of lags ``1..max_lag`` under white noise, ``R ~ N(0, 1/n)``."""
    if acf.n < 100:
        raise ValidationError("significance needs a series of at least 100 days")
    vals = acf.values[1 : int(max_lag) + 1]
    return 2.0 * stats.norm.sf(np.abs(vals) * math.sqrt(acf.n))


class CausalWindow(BaseEstimator):
    """Select the causal window from a daily count series.

    ``fit(counts)`` sets ``acf_``, ``power_law_``, ``delta_star_`` and
    ``p_values_`` (per-lag white-noise p-values up to ``delta_star_``).
    """

    def __init__(self, max_lag=None, lag_range=None, threshold=0.05):
        self.max_lag = max_lag
        self.lag_range = lag_range
        self.threshold = threshold

    def fit(self, X, y=None):
        counts = np.asarray(X.counts if isinstance(X, CountSeries) else X, dtype=float).ravel()
        lag_range = self.lag_range or default_fit_range(counts.size)
        max_lag = self.max_lag if self.max_lag is not None else lag_range[1]
        self.acf_ = autocorrelation(counts, max_lag)
        self.power_law_ = fit_power_law(self.acf_, lag_range)
        self.delta_star_ = select_delta_star(self.power_law_, self.threshold)
        upto = min(self.delta_star_, max_lag)
        self.p_values_ = acf_significance(self.acf_, upto) if counts.size >= 100 else None
        return self

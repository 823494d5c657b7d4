"""Frequency-weighted Gaussian kernel estimate of magnitude distributions.

Magnitudes are first binned into a ``(magnitude, frequency)`` table.  The
estimate at ``m`` is the kernel-weighted average of the frequencies,

    M(m) = sum_i f_i K((m - m_i) / h) / sum_i K((m - m_i) / h),

(Nadaraya-Watson form) with a Gaussian ``K``.  The bandwidth ``h`` is
chosen by leave-one-out cross-validation on the absolute error
``sum_i |f_hat_i - f_i|``.

Weights are computed relative to the largest weight at each evaluation
point, so the ratio never underflows: far from the data the estimate
tends to the nearest frequency instead of 0/0.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_1d, check_positive
from .exceptions import NumericalError, ValidationError

GRID_SIZE = 1000
DEFAULT_RESOLUTION = 0.1


@dataclass(frozen=True)
class FrequencyTable:
    magnitudes: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        m, f = self.magnitudes, self.frequencies
        if m.shape != f.shape or m.ndim != 1:
            raise ValidationError("magnitudes and frequencies must be 1-d arrays of equal length")
        if m.size < 2:
            raise ValidationError("a frequency table needs at least 2 distinct magnitudes")
        if np.any(np.diff(m) <= 0):
            raise ValidationError("table magnitudes must be strictly increasing")
        if np.any(f < 1):
            raise ValidationError("frequencies must be >= 1")

    @property
    def n(self):
        return self.magnitudes.size


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def to_csv(self):
        rows = "".join(f"{m!r},{v!r}\n" for m, v in zip(self.grid.tolist(), self.values.tolist()))
        return "magnitude,value\n" + rows


def frequency_table(magnitudes, resolution=DEFAULT_RESOLUTION):
    """Bin raw magnitudes to multiples of ``resolution`` and count them."""
    mags = as_1d(magnitudes, "magnitudes")
    resolution = check_positive(resolution, "resolution")
    if mags.size == 0:
        raise ValidationError("no magnitudes to tabulate")
    bins = np.round(mags / resolution).astype(np.int64)
    keys, counts = np.unique(bins, return_counts=True)
    # round away representation noise such as 2.3000000000000003
    decimals = max(0, int(np.ceil(-np.log10(resolution))) + 3)
    return FrequencyTable(np.round(keys * resolution, decimals), counts.astype(float))


def magnitude_grid(m_min, m_max, size=GRID_SIZE):
    if not m_max > m_min:
        raise ValidationError("grid needs m_max > m_min")
    return np.linspace(m_min, m_max, size)


def _log_weights(points, centres, gamma):
    z = (points[:, None] - centres[None, :]) / gamma
    return -0.5 * z * z


def estimate_density(table, grid, gamma):
    """Evaluate the kernel-weighted frequency curve on ``grid``."""
    gamma = check_positive(gamma, "gamma")
    grid = as_1d(grid, "grid")
    logw = _log_weights(grid, table.magnitudes, gamma)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    values = (w @ table.frequencies) / w.sum(axis=1)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericalError(f"kernel weights vanish at grid point {grid[bad]!r}")
    return DensityEstimate(grid, values, gamma)


def loo_predictions(table, gamma):
    """Leave-one-out predictions ``f_hat_i`` for one bandwidth."""
    m = table.magnitudes
    logw = _log_weights(m, m, gamma)
    np.fill_diagonal(logw, -np.inf)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    return (w @ table.frequencies) / w.sum(axis=1)


def default_candidates():
    return np.geomspace(0.01, 1.5, 60)


def loocv_bandwidth(table, candidates=None):
    """Return ``(best_gamma, scores)``; ties resolve to the smaller bandwidth."""
    cands = default_candidates() if candidates is None else as_1d(candidates, "candidates")
    if cands.size == 0 or np.any(~(cands > 0)):
        raise ValidationError("bandwidth candidates must be a nonempty set of positive values")
    if np.any(np.diff(cands) <= 0):
        raise ValidationError("bandwidth candidates must be increasing")
    if table.n < 3:
        raise ValidationError("leave-one-out needs at least 3 table entries")
    scores = np.array([np.abs(loo_predictions(table, g) - table.frequencies).sum() for g in cands])
    scores = np.where(np.isfinite(scores), scores, np.inf)
    if np.all(np.isinf(scores)):
        raise NumericalError("every bandwidth candidate failed")
    return float(cands[int(np.argmin(scores))]), scores


class MagnitudeKDE(BaseEstimator):
    """Kernel-weighted frequency curve of a magnitude sample.

    ``fit(magnitudes)`` tabulates at ``resolution`` and sets ``table_``,
    ``bandwidth_`` (cross-validated unless ``bandwidth`` is a number) and
    ``cv_scores_``.  ``predict(grid)`` evaluates the curve.
    """

    def __init__(self, bandwidth="loocv", resolution=DEFAULT_RESOLUTION, candidates=None):
        self.bandwidth = bandwidth
        self.resolution = resolution
        self.candidates = candidates

    def fit(self, X, y=None):
        self.table_ = frequency_table(np.ravel(X), self.resolution)
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "loocv":
                raise ValidationError(f"unknown bandwidth rule {self.bandwidth!r}")
            self.bandwidth_, self.cv_scores_ = loocv_bandwidth(self.table_, self.candidates)
        else:
            self.bandwidth_ = check_positive(self.bandwidth, "bandwidth")
            self.cv_scores_ = None
        return self

    def predict(self, X):
        if not hasattr(self, "table_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("MagnitudeKDE is not fitted yet")
        return estimate_density(self.table_, np.ravel(X), self.bandwidth_).values

"""Triggering-magnitude subintervals, the two pairing analyses and the
trend regression of triggered-magnitude means.

Both analyses reduce a catalog to (trigger, member) index pairs:

* windowed pairing: every event followed by every event in ``(t, t + delta]``;
* mother pairing: every triggered event with its attributed mother.

Pairs are grouped by the trigger magnitude's subinterval; the member
magnitudes of a group feed the kernel estimate and the group mean.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import stats

from ._validation import as_1d, check_finite
from .exceptions import ValidationError

logger = logging.getLogger(__name__)

N_INTERVALS = 4
MIN_POOL = 40


@dataclass(frozen=True)
class SubintervalScheme:
    """Four disjoint closed magnitude intervals ``[lo, hi]``."""

    intervals: tuple
    counts: tuple = ()

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if len(ivs) != N_INTERVALS:
            raise ValidationError(f"exactly {N_INTERVALS} subintervals are required, got {len(ivs)}")
        for lo, hi in ivs:
            check_finite(lo, "interval bound")
            check_finite(hi, "interval bound")
            if hi < lo:
                raise ValidationError(f"interval [{lo}, {hi}] is reversed")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if not hi < lo:
                raise ValidationError("subintervals must be increasing and disjoint")
        object.__setattr__(self, "intervals", ivs)

    def assign(self, magnitudes):
        """Interval index of each magnitude, or -1 when it falls in none."""
        m = np.asarray(magnitudes, dtype=float)
        out = np.full(m.shape, -1, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.intervals):
            out[(m >= lo) & (m <= hi)] = k
        return out

    def label(self, k):
        lo, hi = self.intervals[k]
        return f"{lo:g}-{hi:g}"


@dataclass(frozen=True)
class MagnitudeGroup:
    interval: tuple
    members: np.ndarray
    trigger_mean: float
    n_triggers: int
    triggers: np.ndarray = field(repr=False, default=None)
    member_index: np.ndarray = field(repr=False, default=None)

    @property
    def size(self):
        return self.members.size


@dataclass(frozen=True)
class TrendResult:
    x: np.ndarray
    raw_means: np.ndarray
    normalized_means: np.ndarray
    standard_errors: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    r: float
    p_value: float

    def to_dict(self):
        return {
            "x": self.x.tolist(), "raw_means": self.raw_means.tolist(),
            "normalized_means": self.normalized_means.tolist(),
            "standard_errors": self.standard_errors.tolist(), "counts": self.counts.tolist(),
            "slope": self.slope, "intercept": self.intercept, "R": self.r, "p_value": self.p_value,
        }

    def to_csv(self):
        lines = ["trigger_mean,normalized_mean,stderr"]
        lines += [f"{x!r},{y!r},{s!r}" for x, y, s in
                  zip(self.x.tolist(), self.normalized_means.tolist(), self.standard_errors.tolist())]
        lines.append(f"# slope={self.slope!r},intercept={self.intercept!r},"
                     f"R={self.r!r},p_value={self.p_value!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- intervals

def make_subintervals(trigger_pool, manual=None, m_range=None):
    """Four trigger-magnitude intervals.

    ``trigger_pool`` holds one trigger magnitude per (trigger, member)
    pair, so balancing the pool balances the downstream group sizes.
    ``manual`` intervals are validated (and checked against ``m_range``
    when given) and used as they are.  Otherwise the cut points are the
    pool quartiles, snapped to distinct pool values so that each closed
    interval starts and ends on an observed magnitude.
    """
    pool = as_1d(trigger_pool, "trigger_pool")
    if manual is not None:
        scheme = SubintervalScheme(tuple(manual))
        if m_range is not None:
            lo, hi = m_range
            if scheme.intervals[0][0] < lo or scheme.intervals[-1][1] > hi:
                raise ValidationError(f"manual subintervals leave the magnitude range [{lo}, {hi}]")
        which = scheme.assign(pool)
        counts = np.bincount(which[which >= 0], minlength=N_INTERVALS)
        return SubintervalScheme(scheme.intervals, tuple(int(c) for c in counts))

    if pool.size < MIN_POOL:
        raise ValidationError(f"need at least {MIN_POOL} pairs to choose subintervals, got {pool.size}")
    values, counts = np.unique(pool, return_counts=True)
    if values.size < N_INTERVALS:
        raise ValidationError("fewer than four distinct trigger magnitudes")
    cum = np.cumsum(counts)
    ends = []
    prev = -1
    for k in range(1, N_INTERVALS):
        target = k * pool.size / N_INTERVALS
        i = int(np.searchsorted(cum, target))
        # the value whose cumulative count lands nearest the target
        if i > 0 and abs(cum[i - 1] - target) <= abs(cum[i] - target):
            i -= 1
        i = min(max(i, prev + 1), values.size - 1 - (N_INTERVALS - k))
        ends.append(i)
        prev = i
    starts = [0] + [e + 1 for e in ends]
    ends.append(values.size - 1)
    intervals = tuple((float(values[s]), float(values[e])) for s, e in zip(starts, ends))
    sizes = tuple(int(counts[s : e + 1].sum()) for s, e in zip(starts, ends))
    if max(sizes) > 2 * min(sizes):
        logger.warning("subinterval group sizes %s are not within a factor 2", sizes)
    return SubintervalScheme(intervals, sizes)


# ---------------------------------------------------------------- pairing

def window_pairs(cat, delta_star):
    """All ``(i, j)`` with ``t_i < t_j <= t_i + delta_star``; windows are cut at the catalog end."""
    if delta_star < 0:
        raise ValidationError("delta_star must be >= 0")
    t = cat.times
    first = np.searchsorted(t, t, side="right")
    last = np.searchsorted(t, t + delta_star, side="right")
    n_follow = np.maximum(last - first, 0)
    starters = np.repeat(np.arange(t.size), n_follow)
    # follower index = first[i] + running offset within each starter's block
    block_start = np.repeat(np.cumsum(n_follow) - n_follow, n_follow)
    followers = np.repeat(first, n_follow) + np.arange(starters.size) - block_start
    return starters, followers


def mother_pairs(attribution):
    """``(mother, daughter)`` index pairs of every non-background event."""
    mother = np.asarray(attribution.mother if hasattr(attribution, "mother") else attribution)
    daughters = np.flatnonzero(mother >= 0)
    return mother[daughters], daughters


def _groups(cat, triggers, members, scheme):
    which = scheme.assign(cat.magnitudes[triggers]) if triggers.size else np.array([], dtype=int)
    groups = []
    for k, interval in enumerate(scheme.intervals):
        sel = which == k
        trig, memb = triggers[sel], members[sel]
        uniq = np.unique(trig)
        mean = float(cat.magnitudes[uniq].mean()) if uniq.size else math.nan
        groups.append(MagnitudeGroup(interval, cat.magnitudes[memb], mean, int(uniq.size),
                                     trig, memb))
    return groups


def windowed_groups(cat, delta_star, scheme):
    """Follower magnitudes of starters in each interval; a follower counts once per starter.

    ``trigger_mean`` averages the distinct starters that have at least one
    follower.
    """
    starters, followers = window_pairs(cat, delta_star)
    return _groups(cat, starters, followers, scheme)


def mother_groups(cat, attribution, scheme):
    """Magnitudes of triggered events grouped by their mother's interval."""
    mothers, daughters = mother_pairs(attribution)
    if np.any(mothers >= len(cat)):
        raise ValidationError("attribution does not match the catalog")
    return _groups(cat, mothers, daughters, scheme)


# ---------------------------------------------------------------- regression

def trend(groups):
    """Normalised group means regressed on mean trigger magnitude.

    Means are divided by the average of the four means; the standard
    errors are divided by the same constant.  ``r`` is Pearson's
    correlation and ``p_value`` the two-sided t-test with two degrees of
    freedom.
    """
    groups = list(groups)
    if len(groups) != N_INTERVALS:
        raise ValidationError(f"trend needs {N_INTERVALS} groups")
    for g in groups:
        if g.size < 2:
            raise ValidationError(f"group {g.interval} has {g.size} members; need at least 2")
    x = np.array([g.trigger_mean for g in groups])
    raw = np.array([g.members.mean() for g in groups])
    se = np.array([g.members.std(ddof=1) / math.sqrt(g.size) for g in groups])
    scale = raw.mean()
    norm = raw / scale
    res = stats.linregress(x, norm)
    return TrendResult(x, raw, norm, se / scale, np.array([g.size for g in groups]),
                       float(res.slope), float(res.intercept), float(res.rvalue), float(res.pvalue))


def trend_from_means(x, normalized_means, standard_errors=None):
    """Regression on already-normalised means (e.g. published values)."""
    x = as_1d(x, "x")
    y = as_1d(normalized_means, "normalized_means")
    if x.size != N_INTERVALS or y.size != N_INTERVALS:
        raise ValidationError(f"need {N_INTERVALS} points")
    se = np.full(N_INTERVALS, math.nan) if standard_errors is None else as_1d(standard_errors, "se")
    norm = y / y.mean()
    res = stats.linregress(x, norm)
    return TrendResult(x, y, norm, se, np.zeros(N_INTERVALS, dtype=int), float(res.slope),
                       float(res.intercept), float(res.rvalue), float(res.pvalue))

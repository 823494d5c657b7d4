"""Temporal ETAS: conditional intensity, likelihood, fitting, time change
and most-likely-mother attribution.

    lambda(t) = mu + sum_{t_j < t} kappa exp(a (m_j - m0)) (t - t_j + c)**-p

The pairwise sums are O(N**2) and run in numba kernels.  Every kernel
takes ``x = m - m0`` rather than magnitudes.
"""

from dataclasses import asdict, dataclass, field
import logging
import math

import numba
import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator

from ._validation import check_interval, check_positive
from .catalog import BACKGROUND, Catalog
from .exceptions import NumericalError, ValidationError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("mu", "kappa", "c", "a", "p")


@dataclass(frozen=True)
class EtasParams:
    """ETAS parameters; ``mu`` in events/day, ``c`` in days."""

    mu: float
    kappa: float
    c: float
    a: float
    p: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            check_positive(getattr(self, name), name)

    def as_array(self):
        return np.array([self.mu, self.kappa, self.c, self.a, self.p], dtype=float)

    @classmethod
    def from_array(cls, values):
        values = [float(v) for v in values]
        if len(values) != 5:
            raise ValidationError("ETAS parameters come as (mu, kappa, c, a, p)")
        return cls(*values)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return EtasParams(**{**self.to_dict(), **changes})


@dataclass(frozen=True)
class FitReport:
    params: EtasParams
    log_likelihood: float
    iterations: int
    converged: bool
    learning_window: tuple
    target_window: tuple
    n_target: int
    method: str = "L-BFGS-B"
    message: str = ""

    def to_dict(self):
        out = asdict(self)
        out["params"] = self.params.to_dict()
        out["learning_window"] = list(self.learning_window)
        out["target_window"] = list(self.target_window)
        return out


@dataclass(frozen=True)
class Attribution:
    """Most likely mother per event (``BACKGROUND`` = -1) and the winning rate term."""

    mother: np.ndarray
    contribution: np.ndarray = field(repr=False)

    @property
    def n_triggered(self):
        return int(np.count_nonzero(self.mother >= 0))


# ------------------------------------------------------------------ kernels

@numba.njit(cache=True)
def _omori_int(x, c, p):
    q = 1.0 - p
    L = math.log1p(x / c)
    if q == 0.0:
        return L
    return c ** q * math.expm1(q * L) / q


@numba.njit(cache=True)
def _vexp_int(v0, v1, q):
    # int_{v0}^{v1} v exp(q v) dv
    big = max(abs(v0), abs(v1))
    if abs(q) * big < 0.5:
        total = 0.0
        term = 1.0
        for k in range(16):
            total += term * (v1 ** (k + 2) - v0 ** (k + 2)) / (k + 2)
            term *= q / (k + 1)
        return total
    return (math.exp(q * v1) * (q * v1 - 1.0) - math.exp(q * v0) * (q * v0 - 1.0)) / (q * q)


@numba.njit(cache=True)
def _intensity_kernel(t_eval, times, x, mu, kappa, c, a, p):
    out = np.empty(t_eval.size)
    for k in range(t_eval.size):
        t = t_eval[k]
        s = 0.0
        for j in range(times.size):
            d = t - times[j]
            if d <= 0.0:
                break
            s += math.exp(a * x[j] - p * math.log(d + c))
        out[k] = mu + kappa * s
    return out


@numba.njit(cache=True)
def _loglik_kernel(times, x, mu, kappa, c, a, p, start, end, want_grad):
    n = times.size
    grad = np.zeros(5)
    ll = 0.0
    ea = np.empty(n)
    for j in range(n):
        ea[j] = math.exp(a * x[j])
    n_target = 0
    for i in range(n):
        ti = times[i]
        if ti > end:
            break
        if ti < start:
            continue
        n_target += 1
        s0 = 0.0
        sc = 0.0
        sa = 0.0
        sp = 0.0
        for j in range(i - 1, -1, -1):
            d = ti - times[j]
            if d <= 0.0:
                continue
            lg = math.log(d + c)
            w = ea[j] * math.exp(-p * lg)
            s0 += w
            if want_grad:
                sc += w / (d + c)
                sa += w * x[j]
                sp += w * lg
        lam = mu + kappa * s0
        if not lam > 0.0:
            return math.nan, grad, n_target
        ll += math.log(lam)
        if want_grad:
            grad[0] += 1.0 / lam
            grad[1] += s0 / lam
            grad[2] += -p * kappa * sc / lam
            grad[3] += kappa * sa / lam
            grad[4] += -kappa * sp / lam

    integral = mu * (end - start)
    grad[0] -= end - start
    q = 1.0 - p
    lc = math.log(c)
    for j in range(n):
        tj = times[j]
        if tj >= end:
            break
        upper = end - tj
        lower = start - tj if start > tj else 0.0
        dphi = _omori_int(upper, c, p) - _omori_int(lower, c, p)
        integral += kappa * ea[j] * dphi
        if want_grad:
            dphic = (upper + c) ** (-p) - (lower + c) ** (-p)
            dj = _vexp_int(lc if lower == 0.0 else math.log(lower + c), math.log(upper + c), q)
            grad[1] -= ea[j] * dphi
            grad[2] -= kappa * ea[j] * dphic
            grad[3] -= kappa * x[j] * ea[j] * dphi
            grad[4] += kappa * ea[j] * dj
    return ll - integral, grad, n_target


@numba.njit(cache=True)
def _compensator_kernel(times, x, mu, kappa, c, a, p, start, t_eval):
    # int_start^t lambda for each t in t_eval (sorted)
    out = np.empty(t_eval.size)
    for k in range(t_eval.size):
        t = t_eval[k]
        s = mu * (t - start)
        for j in range(times.size):
            if times[j] >= t:
                break
            lower = start - times[j] if start > times[j] else 0.0
            s += kappa * math.exp(a * x[j]) * (_omori_int(t - times[j], c, p)
                                               - _omori_int(lower, c, p))
        out[k] = s
    return out


@numba.njit(cache=True)
def _attribution_kernel(times, x, mu, kappa, c, a, p):
    n = times.size
    mother = np.full(n, -1, dtype=np.int64)
    contrib = np.empty(n)
    for i in range(n):
        best = -1.0
        arg = -1
        for j in range(i):
            d = times[i] - times[j]
            if d <= 0.0:
                continue
            term = kappa * math.exp(a * x[j] - p * math.log(d + c))
            if term >= best:  # ties go to the more recent event
                best = term
                arg = j
        if arg >= 0 and best > mu:
            mother[i] = arg
            contrib[i] = best
        else:
            contrib[i] = mu
    return mother, contrib


# ------------------------------------------------------------------ API

def _arrays(cat):
    return np.ascontiguousarray(cat.times), np.ascontiguousarray(cat.magnitudes - cat.m0)


def intensity(t, cat, params):
    """Conditional intensity at time(s) ``t`` given the events of ``cat`` before ``t``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    times, x = _arrays(cat)
    out = _intensity_kernel(t_arr, times, x, *params.as_array())
    return float(out[0]) if np.ndim(t) == 0 else out


def _target(cat, target):
    if target is None:
        return cat.window
    lo, hi = check_interval(target, "target")
    if lo < cat.window[0] or hi > cat.window[1]:
        raise ValidationError(f"target {target} is not inside the catalog window {cat.window}")
    return lo, hi


def log_likelihood(cat, params, target=None, return_grad=False):
    """Point-process log-likelihood over ``target`` (default: the whole window).

    Events before the target start act as history only.  With
    ``return_grad`` the gradient with respect to (mu, kappa, c, a, p) is
    returned as well.
    """
    start, end = _target(cat, target)
    times, x = _arrays(cat)
    ll, grad, n_target = _loglik_kernel(times, x, *params.as_array(), start, end, return_grad)
    if n_target == 0:
        raise ValidationError("no events inside the target window")
    if math.isnan(ll):
        raise NumericalError("non-positive intensity at an event time")
    return (ll, grad) if return_grad else ll


def compensator(t, cat, params, start=None):
    """``int_start^t lambda(s) ds`` for sorted time(s) ``t``; ``start`` defaults to the window start."""
    start = cat.window[0] if start is None else float(start)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    times, x = _arrays(cat)
    out = _compensator_kernel(times, x, *params.as_array(), start, t_arr)
    return float(out[0]) if np.ndim(t) == 0 else out


def time_rescale(cat, params):
    """Random time change ``tau_i = int_{t_start}^{t_i} lambda``.

    Returns a catalog with the transformed times and window
    ``[0, int_{t_start}^{t_end} lambda]``; magnitudes, order and parents
    are unchanged.
    """
    times, x = _arrays(cat)
    start, end = cat.window
    t_eval = np.append(times, end)
    tau = _compensator_kernel(times, x, *params.as_array(), start, t_eval)
    return cat.with_times(tau[:-1], (0.0, float(tau[-1])))


def attribute_mothers(cat, params):
    """For every event, the earlier event with the largest rate term, or background.

    An event is background when no single earlier term exceeds ``mu``.
    """
    times, x = _arrays(cat)
    mother, contrib = _attribution_kernel(times, x, *params.as_array())
    mother[mother < 0] = BACKGROUND
    mother.setflags(write=False)
    contrib.setflags(write=False)
    return Attribution(mother, contrib)


def learning_split(window, learning_fraction):
    if not 0.0 <= learning_fraction < 1.0:
        raise ValidationError("learning_fraction must lie in [0, 1)")
    start, end = window
    split = start + learning_fraction * (end - start)
    return (start, split), (split, end)


def fit_params(cat, init, learning_fraction=0.1, method="L-BFGS-B", max_iter=2000, tol=1e-8):
    """Maximum-likelihood ETAS parameters.

    The first ``learning_fraction`` of the window is precursory history.
    The search runs over log-parameters, so positivity is automatic.
    ``method`` is ``"L-BFGS-B"`` (analytic gradient) or ``"Nelder-Mead"``.
    A run that exhausts ``max_iter`` returns the best point found with
    ``converged=False``.
    """
    if len(cat) == 0:
        raise ValidationError("cannot fit an empty catalog")
    learning, target = learning_split(cat.window, learning_fraction)
    times, x = _arrays(cat)
    n_target = int(np.count_nonzero((times >= target[0]) & (times <= target[1])))
    if n_target == 0:
        raise ValidationError("no events after the learning period")
    scale = float(n_target)
    evals = [0]

    def objective(theta, want_grad):
        evals[0] += 1
        with np.errstate(over="ignore"):
            par = np.exp(theta)
        if not np.all(np.isfinite(par)) or np.any(par == 0):
            return (math.inf, np.zeros(5)) if want_grad else math.inf
        ll, grad, _ = _loglik_kernel(times, x, *par, target[0], target[1], want_grad)
        if not math.isfinite(ll):
            return (math.inf, np.zeros(5)) if want_grad else math.inf
        if want_grad:
            return -ll / scale, -grad * par / scale
        return -ll / scale

    theta0 = np.log(init.as_array())
    if method == "L-BFGS-B":
        # wide box keeps the search away from overflow only
        bounds = [(-25, 8), (-25, 6), (-25, 5), (-10, 3), (-5, 2.5)]
        res = optimize.minimize(objective, theta0, args=(True,), jac=True, method="L-BFGS-B",
                                bounds=bounds,
                                options={"maxiter": max_iter, "ftol": tol * 1e-3, "gtol": 1e-7,
                                         "maxcor": 20})
        converged = bool(res.success)
    elif method == "Nelder-Mead":
        res = optimize.minimize(objective, theta0, args=(False,), method="Nelder-Mead",
                                options={"maxiter": max_iter, "maxfev": 4 * max_iter,
                                         "fatol": tol, "xatol": 1e-8, "adaptive": True})
        converged = bool(res.success)
    else:
        raise ValidationError(f"unknown fit method {method!r}")
    params = EtasParams.from_array(np.exp(res.x))
    ll = -float(res.fun) * scale
    if not converged:
        logger.warning("ETAS fit did not converge: %s", res.message)
    return FitReport(params=params, log_likelihood=ll, iterations=int(res.nit), converged=converged,
                     learning_window=learning, target_window=target, n_target=n_target,
                     method=method, message=str(res.message))


def average_params(reports):
    """Component-wise mean of several fitted parameter sets."""
    arr = np.array([r.params.as_array() for r in reports])
    return EtasParams.from_array(arr.mean(axis=0))


def branching_ratio(params, beta, duration=math.inf):
    """Mean direct offspring per event under GR magnitudes, Omori kernel cut at ``duration``.

    Infinite when ``beta <= a``, or when ``p <= 1`` and ``duration`` is infinite.
    """
    if beta <= params.a:
        return math.inf
    if math.isinf(duration):
        if params.p <= 1:
            return math.inf
        omori_total = params.c ** (1 - params.p) / (params.p - 1)
    else:
        omori_total = float(_omori_int(duration, params.c, params.p))
    return params.kappa * omori_total * beta / (beta - params.a)


# ------------------------------------------------------------------ estimator

def _as_catalog(X, m0=None, window=None):
    if isinstance(X, Catalog):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("expected a Catalog or an (n, 2) array of (time, magnitude)")
    return Catalog.from_arrays(arr[:, 0], arr[:, 1], m0=m0, window=window)


class EtasEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_params`.

    ``X`` is a :class:`~etasmag.catalog.Catalog` or an ``(n, 2)`` array of
    ``(time, magnitude)`` rows.  After ``fit``:

    * ``score(X)`` is the log-likelihood over the post-learning window,
    * ``transform(X)`` returns the rescaled event times,
    * ``predict(X)`` returns the most likely mother of every event.
    """

    def __init__(self, mu=0.5, kappa=0.02, c=0.01, a=1.0, p=1.1, learning_fraction=0.1,
                 method="L-BFGS-B", max_iter=2000, m0=None):
        self.mu = mu
        self.kappa = kappa
        self.c = c
        self.a = a
        self.p = p
        self.learning_fraction = learning_fraction
        self.method = method
        self.max_iter = max_iter
        self.m0 = m0

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("EtasEstimator is not fitted yet")

    def fit(self, X, y=None):
        cat = _as_catalog(X, self.m0)
        init = EtasParams(self.mu, self.kappa, self.c, self.a, self.p)
        self.report_ = fit_params(cat, init, self.learning_fraction, self.method, self.max_iter)
        self.params_ = self.report_.params
        self.m0_ = cat.m0
        return self

    def score(self, X, y=None):
        self._check_fitted()
        cat = _as_catalog(X, self.m0_)
        _, target = learning_split(cat.window, self.learning_fraction)
        return log_likelihood(cat, self.params_, target)

    def transform(self, X):
        self._check_fitted()
        return time_rescale(_as_catalog(X, self.m0_), self.params_).times

    def predict(self, X):
        self._check_fitted()
        return attribute_mothers(_as_catalog(X, self.m0_), self.params_).mother

"""Branching simulation of the temporal ETAS process.

Background events form a homogeneous Poisson process of rate ``mu``; each
event then spawns a Poisson number of direct offspring with mean
``kappa exp(a (m - m0)) * int_0^{t_end - t} (s + c)**-p ds``, placed by
inverting the truncated Omori integral.  Generations are processed in
bulk, one numpy draw per quantity, so a fixed seed gives a fixed catalog.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import check_interval
from .catalog import BACKGROUND, Catalog
from .etas import EtasParams, branching_ratio
from .exceptions import SupercriticalError, ValidationError
from .magnitudes import (ConditionalLaw, GrLaw, conditional_sample, gr_sample, omori_integral, omori_inverse_integral)

MAX_EVENTS = 5_000_000


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one synthetic catalog.

    ``conditional`` switches triggered magnitudes from Gutenberg-Richter to
    the mother-dependent law; it must share ``beta``, ``a`` and ``m0`` with
    ``gr`` and ``params``.  ``learning_period`` (days) is metadata for
    downstream fits; the simulation always covers the whole window.
    """

    params: EtasParams
    gr: GrLaw
    window: tuple = (0.0, 1000.0)
    seed: int = 0
    conditional: ConditionalLaw = None
    learning_period: float = 0.0
    max_events: int = field(default=MAX_EVENTS, repr=False)

    def __post_init__(self):
        lo, hi = check_interval(self.window)
        if hi <= lo:
            raise ValidationError("simulation window must have positive length")
        if self.learning_period < 0 or self.learning_period >= hi - lo:
            raise ValidationError("learning_period must lie in [0, window length)")
        law = self.conditional
        if law is not None:
            if (not math.isclose(law.beta, self.gr.beta) or not math.isclose(law.a, self.params.a)
                    or law.m0 != self.gr.m0):
                raise ValidationError("conditional law must share beta, a and m0 with the other laws")

    @property
    def magnitude_mode(self):
        return "GR" if self.conditional is None else "CONDITIONAL"

    def branching_ratio(self):
        """Mean direct offspring per event with the Omori kernel cut at the window length.

        The same value holds in conditional mode: the leading eigenvalue of
        the mean-offspring operator equals the Gutenberg-Richter average
        ``beta / (beta - a)`` for every ``c1``.
        """
        return branching_ratio(self.params, self.gr.beta, self.window[1] - self.window[0])


def check_subcritical(cfg):
    n_star = cfg.branching_ratio()
    if not n_star < 1.0:
        raise SupercriticalError(
            f"branching ratio {n_star:.4g} >= 1 over a {cfg.window[1] - cfg.window[0]:g}-day "
            f"window (kappa={cfg.params.kappa}, c={cfg.params.c}, p={cfg.params.p}, "
            f"a={cfg.params.a}, beta={cfg.gr.beta:.4g})")
    return n_star


def simulate(cfg):
    """Simulate a catalog with ground-truth parent labels (``BACKGROUND`` = -1).

    Offspring falling after the window end are never generated, and neither
    are their descendants.  Raises :class:`SupercriticalError` when the
    branching ratio is not below one.
    """
    check_subcritical(cfg)
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    par = cfg.params
    m0, beta = cfg.gr.m0, cfg.gr.beta
    t_start, t_end = cfg.window

    n_bg = rng.poisson(par.mu * (t_end - t_start))
    times = [t_start + (t_end - t_start) * rng.random(n_bg)]
    mags = [gr_sample(_open_uniform(rng, n_bg), cfg.gr)]
    parents = [np.full(n_bg, BACKGROUND, dtype=np.int64)]
    offset = 0
    gen_t, gen_m = times[0], mags[0]
    total = n_bg

    while gen_t.size:
        gen_idx = offset + np.arange(gen_t.size)
        horizon = omori_integral(t_end - gen_t, par.c, par.p)
        expected = par.kappa * np.exp(par.a * (gen_m - m0)) * horizon
        counts = rng.poisson(expected)
        k = int(counts.sum())
        offset += gen_t.size
        if k == 0:
            break
        total += k
        if total > cfg.max_events:
            raise SupercriticalError(f"simulation exceeded {cfg.max_events} events")
        src = np.repeat(np.arange(gen_t.size), counts)
        u = _open_uniform(rng, k)
        lag = omori_inverse_integral(u * horizon[src], par.c, par.p)
        child_t = np.minimum(gen_t[src] + lag, t_end)
        if cfg.conditional is None:
            child_m = gr_sample(_open_uniform(rng, k), cfg.gr)
        else:
            child_m = conditional_sample(_open_uniform(rng, k), gen_m[src], cfg.conditional)
        times.append(child_t)
        mags.append(np.asarray(child_m, dtype=float))
        parents.append(gen_idx[src])
        gen_t, gen_m = child_t, np.asarray(child_m, dtype=float)

    t = np.concatenate(times)
    m = np.concatenate(mags)
    parent = np.concatenate(parents)
    return Catalog.from_arrays(t, m, m0=m0, window=(t_start, t_end), parent=parent)


def _open_uniform(rng, size):
    u = rng.random(size)
    # Generator.random is [0, 1)
    return np.where(u == 0.0, 2.0 ** -54, u)

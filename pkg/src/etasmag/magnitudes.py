"""Magnitude laws and the two temporal component laws of ETAS.

All densities and samplers are vectorised: they accept scalars or arrays
and return the same shape.  Random draws are passed in as uniforms, so the
functions themselves are deterministic.

The conditional triggered-magnitude law is

    p(m | m') = beta exp(-beta x) [1 + C1 g(m') (1 - 2 exp(-beta x))],
    g(m') = 1 - 2 exp(-(beta - a)(m' - m0)),   x = m - m0.

With ``y = exp(-beta x)`` its CDF is ``F = 1 - y + C1 g (y**2 - y)``, a
quadratic in ``y`` that is inverted in closed form by
:func:`conditional_sample`.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_finite, check_not_below, check_positive, check_unit_open
from .exceptions import NumericalError, ValidationError

LN10 = math.log(10.0)


@dataclass(frozen=True)
class GrLaw:
    """Gutenberg-Richter law with slope ``beta = b ln 10`` above ``m0``."""

    beta: float = LN10
    m0: float = 0.0

    def __post_init__(self):
        check_positive(self.beta, "beta")
        check_finite(self.m0, "m0")

    @classmethod
    def from_b_value(cls, b, m0):
        return cls(beta=check_positive(b, "b") * LN10, m0=m0)

    @property
    def b_value(self):
        return self.beta / LN10


@dataclass(frozen=True)
class ConditionalLaw:
    beta: float
    a: float
    c1: float
    m0: float

    def __post_init__(self):
        check_positive(self.beta, "beta")
        check_positive(self.a, "a")
        check_finite(self.m0, "m0")
        c1 = check_finite(self.c1, "c1")
        if not 0.0 <= c1 < 1.0:
            raise ValidationError(f"c1 must lie in [0, 1), got {c1}")
        # beta <= a lets the coupling factor exceed 1 and the density go negative
        if self.beta <= self.a:
            raise ValidationError(
                f"conditional law needs beta > a (beta={self.beta}, a={self.a})")

    @property
    def gr(self):
        return GrLaw(self.beta, self.m0)


@dataclass(frozen=True)
class OmoriLaw:
    c: float
    p: float

    def __post_init__(self):
        check_positive(self.c, "c")
        check_positive(self.p, "p")


@dataclass(frozen=True)
class ProductivityLaw:
    kappa: float
    a: float
    m0: float

    def __post_init__(self):
        check_positive(self.kappa, "kappa")
        check_positive(self.a, "a")
        check_finite(self.m0, "m0")


def _out(result, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(np.asarray(result).reshape(-1)[0])
    return result


def gr_density(m, law):
    """Gutenberg-Richter density ``beta exp(-beta (m - m0))``."""
    x = check_not_below(m, law.m0, "magnitude") - law.m0
    return _out(law.beta * np.exp(-law.beta * x), m)


def gr_cdf(m, law):
    x = check_not_below(m, law.m0, "magnitude") - law.m0
    return _out(-np.expm1(-law.beta * x), m)


def gr_sample(u, law):
    """Inverse-CDF draw, ``m0 - ln(1 - u) / beta``."""
    arr = check_unit_open(u)
    return _out(law.m0 - np.log1p(-arr) / law.beta, u)


def coupling(m_prime, law):
    """The mother-dependent factor ``g(m') = 1 - 2 exp(-(beta - a)(m' - m0))``."""
    xp = check_not_below(m_prime, law.m0, "mother magnitude") - law.m0
    return 1.0 - 2.0 * np.exp(-(law.beta - law.a) * xp)


def conditional_density(m, m_prime, law):
    x = check_not_below(m, law.m0, "magnitude") - law.m0
    g = coupling(m_prime, law)
    y = np.exp(-law.beta * x)
    dens = law.beta * y * (1.0 + law.c1 * g * (1.0 - 2.0 * y))
    if np.any(dens < 0):
        raise NumericalError("conditional density is negative; law invariants violated")
    return _out(dens, m, m_prime)


def conditional_cdf(m, m_prime, law):
    x = check_not_below(m, law.m0, "magnitude") - law.m0
    y = np.exp(-law.beta * x)
    cg = law.c1 * coupling(m_prime, law)
    out = -np.expm1(-law.beta * x) + cg * (y * y - y)
    return _out(out, m, m_prime)


def conditional_mean(m_prime, law):
    """Closed-form mean ``m0 + (1 + C1 g / 2) / beta`` of the conditional law."""
    g = coupling(m_prime, law)
    return _out(law.m0 + (1.0 + 0.5 * law.c1 * g) / law.beta, m_prime)


def conditional_sample(u, m_prime, law):
    """Draw daughter magnitudes given mother magnitudes ``m_prime``.

    Solves ``A y**2 - (1 + A) y + (1 - u) = 0`` with ``A = C1 g(m')`` for
    the unique root in (0, 1] and maps it back through
    ``m = m0 - ln(y) / beta``.  ``u`` and ``m_prime`` broadcast.
    """
    uu = check_unit_open(u)
    A = law.c1 * coupling(m_prime, law)
    uu, A = np.broadcast_arrays(uu, A)
    one_minus_u = 1.0 - uu
    disc = (1.0 + A) ** 2 - 4.0 * A * one_minus_u
    # citardauq form: finite as A -> 0 and free of cancellation
    y = 2.0 * one_minus_u / ((1.0 + A) + np.sqrt(np.maximum(disc, 0.0)))
    if np.any(~(y > 0.0)) or np.any(y > 1.0) or np.any(disc < 0):
        bad = np.flatnonzero(~((y > 0) & (y <= 1)) | (disc < 0))[0]
        raise NumericalError(
            f"no CDF root in (0, 1] for u={uu.flat[bad]!r}, A={A.flat[bad]!r}")
    m = law.m0 - np.log(y) / law.beta
    zero = A == 0.0
    if np.any(zero):
        m = np.where(zero, law.m0 - np.log1p(-uu) / law.beta, m)
    return _out(m, u, m_prime)


def productivity(m, law):
    x = check_not_below(m, law.m0, "magnitude") - law.m0
    return _out(law.kappa * np.exp(law.a * x), m)


def omori(t, law):
    """Omori-Utsu kernel ``(t + c) ** -p``; ``t`` in days since the trigger."""
    tt = check_not_below(t, 0.0, "elapsed time")
    return _out((tt + law.c) ** (-law.p), t)


def omori_integral(t, c, p):
    """``int_0^t (s + c)**-p ds``, exact for every ``p`` including ``p == 1``.

    Written as ``c**q expm1(q L) / q`` with ``q = 1 - p`` and
    ``L = log1p(t / c)``, which is stable as ``q -> 0``.
    """
    t = np.asarray(t, dtype=float)
    q = 1.0 - p
    L = np.log1p(t / c)
    if q == 0.0:
        return L
    return c ** q * np.expm1(q * L) / q


def omori_inverse_integral(v, c, p):
    """Solve ``omori_integral(s, c, p) == v`` for ``s >= 0``."""
    v = np.asarray(v, dtype=float)
    q = 1.0 - p
    if q == 0.0:
        return c * np.expm1(v)
    # (s + c)**q = c**q (1 + q v c**-q)
    return c * np.expm1(np.log1p(q * v * c ** (-q)) / q)


def gr_mean_productivity(beta, a):
    """``E[exp(a (m - m0))]`` under Gutenberg-Richter; infinite when ``beta <= a``."""
    if beta <= a:
        return math.inf
    return beta / (beta - a)


def conditional_offspring_matrix(beta, a, c1):
    """Mean-offspring operator of the conditional law on ``span{e^(a x), e^((2a - beta) x)}``.

    Up to the factor ``kappa * int omori``, column ``k`` is the image of
    basis function ``k``.  Every image of the operator lies in this span,
    so its spectral radius is the growth factor of total productivity per
    generation.
    """
    if beta <= a:
        raise ValidationError("beta must exceed a")

    def moment(gam):
        # int p(m|m') e^(gam x) dm = A + C1 g(m') D
        A = beta / (beta - gam)
        return A, A - 2.0 * beta / (2.0 * beta - gam)

    (A1, D1), (A2, D2) = moment(a), moment(2.0 * a - beta)
    return np.array([[A1 + c1 * D1, A2 + c1 * D2],
                     [-2.0 * c1 * D1, -2.0 * c1 * D2]])

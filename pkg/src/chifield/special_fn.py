"""Standard normal helpers and the overshoot correction function ``nu``.

``nu(x) = 2 x^-2 exp(-2 sum_{n>=1} n^-1 Phi(-x sqrt(n) / 2))`` for ``x > 0`` and
``nu(0) = 1``. It converts continuous-parameter tail formulas into formulas
for maxima over a discrete grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev
from scipy import integrate, special

from .errors import ConfigurationError, ConvergenceError

_SQRT2PI = math.sqrt(2.0 * math.pi)

# Direct summation stops here; beyond it the tail is closed by Euler-Maclaurin.
_DIRECT_TERMS = 1 << 14
_EM_START = 2048
# sup_t |t^4 g'''(t)| <= 3 for g(t) = Phi(-a sqrt t)/t, any a >= 0; 8 leaves margin.
_G3_BOUND = 8.0


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT2PI
    return float(out) if out.ndim == 0 else out


def Phi(x):
    """Standard normal CDF, accurate in both tails."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class NuMethod:
    """How ``nu`` is evaluated: the exact series or the closed-form approximation.

    ``truncation`` caps the number of directly summed series terms and ``tol``
    bounds the neglected part of the series sum.
    """

    variant: str = "series"
    tol: float = 1e-10
    truncation: int = _DIRECT_TERMS

    def __post_init__(self):
        if self.variant not in ("series", "approx"):
            raise ConfigurationError(f"unknown nu method {self.variant!r}")
        if not self.tol > 0:
            raise ConfigurationError("nu series tolerance must be > 0")
        if int(self.truncation) < 1:
            raise ConfigurationError("nu series truncation must be >= 1")

    @classmethod
    def series(cls, tol=1e-10, truncation=_DIRECT_TERMS):
        return cls("series", tol, truncation)

    @classmethod
    def approx(cls):
        return cls("approx")

    @classmethod
    def parse(cls, value):
        if isinstance(value, NuMethod):
            return value
        if value in (None, "series"):
            return cls.series()
        if value == "approx":
            return cls.approx()
        raise ConfigurationError(f"unknown nu method {value!r}; use 'series' or 'approx'")


def _tail_bound(a, n):
    # sum_{k>n} Phi(-a sqrt k)/k <= int_n^inf exp(-a^2 t/2)/(2t) dt <= exp(-a^2 n/2)/(n a^2)
    return math.exp(-0.5 * a * a * n) / (n * a * a)


def _half_log_integral(z):
    """``2 * int_z^inf Phi(-s)/s ds`` for ``z > 0``."""
    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
    if z >= 1.0:
        val, err = integrate.quad(lambda s: special.ndtr(-s) / s, z, np.inf, **opts)
        return 2.0 * val, 2.0 * err
    # Split off the 1/(2s) singularity so quad only sees smooth integrands.
    inner, e1 = integrate.quad(lambda s: (special.ndtr(s) - 0.5) / s, z, 1.0, **opts)
    outer, e2 = integrate.quad(lambda s: special.ndtr(-s) / s, 1.0, np.inf, **opts)
    return -math.log(z) - 2.0 * inner + 2.0 * outer, 2.0 * (e1 + e2)


def _series_sum(x, tol, truncation):
    """``sum_n Phi(-x sqrt(n)/2)/n`` with a certified truncation error below ``tol``."""
    a = 0.5 * x
    chunk = 512
    total = 0.0
    n = 0
    while n < truncation:
        k = np.arange(n + 1, min(n + chunk, truncation) + 1, dtype=float)
        total += math.fsum(special.ndtr(-a * np.sqrt(k)) / k)
        n = int(k[-1])
        if _tail_bound(a, n) < tol:
            return total
        chunk *= 2

    # Euler-Maclaurin closure of the tail from N = _EM_START:
    # sum_{k>=N} g(k) = int_N^inf g + g(N)/2 - g'(N)/12 + R,  |R| <= |g'''(N)|/720.
    N = min(_EM_START, truncation)
    k = np.arange(1, N, dtype=float)
    head = math.fsum(special.ndtr(-a * np.sqrt(k)) / k)
    w = a * math.sqrt(N)
    g = special.ndtr(-w) / N
    dg = -special.ndtr(-w) / N**2 - a * phi(w) / (2.0 * N**1.5)
    integral, quad_err = _half_log_integral(w)
    remainder = _G3_BOUND / (720.0 * N**4) + quad_err
    if remainder >= tol:
        raise ConvergenceError(
            f"nu series at x={x!r}: tolerance {tol!r} is below the attainable "
            f"bound {remainder:.3g} with truncation {truncation}"
        )
    return head + integral + g / 2.0 - dg / 12.0


def nu_series(x, tol=1e-10, truncation=_DIRECT_TERMS):
    """``nu(x)`` from its defining series.

    The series sum is certified to be within ``tol`` of its limit: terms are
    added until an exponential majorant of the remainder falls below ``tol``;
    when ``x`` is so small that this needs more than ``truncation`` terms, the
    tail is closed by an Euler-Maclaurin expansion whose remainder is bounded
    explicitly.
    """
    x = float(x)
    if not x >= 0 or math.isinf(x):
        raise ValueError(f"nu_series needs a finite x >= 0, got {x!r}")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if x == 0.0:
        return 1.0
    s = _series_sum(x, tol, int(truncation))
    return min(1.0, 2.0 / (x * x) * math.exp(-2.0 * s))


def _nu_approx_array(x):
    h = 0.5 * x
    with np.errstate(invalid="ignore", divide="ignore"):
        num = (2.0 / x) * (special.ndtr(h) - 0.5)
        den = h * special.ndtr(h) + np.exp(-0.5 * h * h) / _SQRT2PI
        out = num / den
    return np.where(x < 1e-8, 1.0, out)


def nu_approx(x):
    """Closed-form approximation of ``nu``, accurate to about two percent.

    ``((2/x)(Phi(x/2) - 1/2)) / ((x/2) Phi(x/2) + phi(x/2))``; tends to 1 as
    ``x -> 0``.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"nu_approx needs x > 0, got {x!r}")
    return float(_nu_approx_array(np.array(x)))


def nu(x, method=None):
    """Vectorised ``nu`` over an array of arguments ``x >= 0``.

    With the series method a handful of distinct arguments are evaluated
    exactly. Larger arrays go through a Chebyshev interpolant of the series
    on ``[min(x), max(x)]`` whose accuracy is checked against exact values
    before use.
    """
    method = NuMethod.parse(method)
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise ValueError("nu needs arguments >= 0")
    if method.variant == "approx":
        out = np.ones_like(x)
        pos = x > 0
        out[pos] = _nu_approx_array(x[pos])
        return out

    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    if xp.size == 0:
        return out

    def exact(v):
        return np.array([nu_series(t, method.tol, method.truncation) for t in np.ravel(v)]).reshape(np.shape(v))

    uniq = np.unique(xp)
    if uniq.size <= 32:
        out[pos] = exact(uniq)[np.searchsorted(uniq, xp)]
        return out
    lo, hi = float(uniq[0]), float(uniq[-1])
    out[pos] = _chebyshev_nu(lo, hi, exact, method.tol)(xp)
    return out


_CHEB_CACHE = {}


def _chebyshev_nu(lo, hi, exact, tol):
    key = (lo, hi, tol)
    if key in _CHEB_CACHE:
        return _CHEB_CACHE[key]
    target = max(10.0 * tol, 1e-13)
    probe = lo + (hi - lo) * (0.5 + 0.5 * np.cos(np.pi * (np.arange(17) + 0.5) / 17))
    truth = exact(probe)
    deg = 16
    while True:
        fit = chebyshev.Chebyshev.interpolate(exact, deg, domain=[lo, hi])
        err = np.max(np.abs(fit(probe) - truth) / truth)
        if err <= target:
            break
        if deg >= 256:
            fit = exact
            break
        deg *= 2
    if len(_CHEB_CACHE) > 256:
        _CHEB_CACHE.clear()
    _CHEB_CACHE[key] = fit
    return fit

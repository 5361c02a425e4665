"""Analytic approximations to ``P(max_{t in T} Y(t) >= b)`` on a lattice ``T``.

Three leading-order formulas are provided, all assembled in log space:

* :func:`renewal_tail` -- discrete-grid approximation from nonlinear renewal
  theory; needs a per-axis spacing and uses the overshoot factor ``nu``.
* :func:`tube_tail` -- conservative volume-of-tube bound obtained by
  interpolating the lattice field into a piecewise-smooth one.
* :func:`continuous_tail` -- bound for the maximum over the whole rectangle.

``b`` is on the chi scale, i.e. ``Y = sqrt(chi-square)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field_model import (
    CovarianceSpec,
    Lattice,
    bar_rho,
    sphere_expectation_mc,
    sphere_moment_prod,
    sphere_volume,
)
from .special_fn import NuMethod, nu

METHODS = ("renewal", "tube", "continuous")

DEFAULT_SAMPLES = 1_000_000
UNEQUAL_SPACING_RATIO = 2.0
COARSE_LATTICE_ARG = 10.0


@dataclass(frozen=True)
class TailQuery:
    """Everything needed to evaluate one tail probability.

    ``spacing`` overrides the per-axis spacing used by the renewal formula
    (by default the mean gap of each lattice axis). ``closed_form`` lets the
    continuous bound use the exact sphere moment when ``p == 2``; switch it off
    to share Monte Carlo directions with the other methods.
    """

    spec: CovarianceSpec
    lattice: Lattice
    b: float
    method: str = "renewal"
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    nu_method: NuMethod = field(default_factory=NuMethod.series)
    spacing: tuple | None = None
    closed_form: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not (self.b > 0 and math.isfinite(self.b)):
            raise ValueError(f"threshold b must be a positive finite number, got {self.b!r}")
        if self.lattice.p != self.spec.p:
            raise ValueError(f"lattice has {self.lattice.p} axes, spec has p={self.spec.p}")
        object.__setattr__(self, "nu_method", NuMethod.parse(self.nu_method))


@dataclass(frozen=True)
class TailEstimate:
    method: str
    b: float
    prob_raw: float
    log_prob_raw: float
    std_error: float = 0.0
    flags: tuple = ()

    @property
    def prob_clamped(self):
        return clamp(self.prob_raw)

    def to_dict(self):
        return {
            "b": self.b,
            "method": self.method,
            "prob_raw": self.prob_raw,
            "prob_clamped": self.prob_clamped,
            "std_error": self.std_error,
            "flags": list(self.flags),
        }


def clamp(prob_raw):
    """Map a nonnegative asymptotic tail expression into ``[0, 1)`` via ``1 - exp(-x)``."""
    x = float(prob_raw)
    if not x >= 0:
        raise ValueError(f"clamp needs a nonnegative input, got {x!r}")
    return -math.expm1(-x)


def _require_volume(lattice):
    if lattice.degenerate_axes:
        raise ValueError(
            f"lattice axes {lattice.degenerate_axes} have a single point; the rectangle has measure zero"
        )


def _sphere_integral(q, integrand):
    """Surface integral of ``integrand`` over ``S^(m-1)`` with its standard error."""
    mean, se = sphere_expectation_mc(q.spec, integrand, q.samples, q.seed, q.threads)
    vol = sphere_volume(q.spec.m)
    return vol * mean, vol * se


def _finish(q, log_prefactor, integral, integral_se, flags=()):
    if integral <= 0:
        return TailEstimate(q.method, q.b, 0.0, -math.inf, 0.0, tuple(flags))
    log_p = log_prefactor + math.log(integral)
    prob = math.exp(log_p)
    return TailEstimate(q.method, float(q.b), prob, log_p, prob * integral_se / integral, tuple(flags))


def renewal_spacing(q):
    """Per-axis spacings used by the renewal formula, plus warning flags."""
    flags = []
    if q.spacing is not None:
        D = np.broadcast_to(np.asarray(q.spacing, dtype=float), (q.spec.p,)).copy()
        if np.any(D < 0):
            raise ValueError("spacing override must be nonnegative")
    else:
        D = np.array(q.lattice.mean_spacings)
        if any(q.lattice.spacing_ratio(i) > UNEQUAL_SPACING_RATIO for i in range(q.lattice.p)):
            flags.append("unequal_spacing")
    return D, flags


def renewal_tail(q):
    """Renewal-theory approximation for the maximum over an equally spaced grid.

    ``|T| (2 pi)^(-m/2) b^(m+2p-2) exp(-b^2/2) int prod_i bar_rho_i nu(b sqrt(2 bar_rho_i D_i)) du``.
    Unequally spaced axes are replaced by their mean spacing (flagged as
    ``unequal_spacing`` when gaps vary by more than a factor of two).
    """
    if q.method != "renewal":
        q = _with_method(q, "renewal")
    _require_volume(q.lattice)
    spec, b = q.spec, float(q.b)
    D, flags = renewal_spacing(q)
    if np.any(b * np.sqrt(2.0 * spec.rho.max(axis=0) * D) > COARSE_LATTICE_ARG):
        flags.append("coarse_lattice")

    def integrand(u):
        r = bar_rho(spec, u)
        x = b * np.sqrt(2.0 * r * D)
        return np.prod(r * nu(x, q.nu_method).reshape(x.shape), axis=-1)

    integral, se = _sphere_integral(q, integrand)
    m, p = spec.m, spec.p
    log_pref = (
        math.log(q.lattice.volume)
        - 0.5 * m * math.log(2.0 * math.pi)
        + (m + 2 * p - 2) * math.log(b)
        - 0.5 * b * b
    )
    return _finish(q, log_pref, integral, se, flags)


def tube_tail(q):
    """Volume-of-tube upper bound; handles unequal spacing through ``sum_j sqrt(D_ij)``."""
    if q.method != "tube":
        q = _with_method(q, "tube")
    _require_volume(q.lattice)
    spec, b = q.spec, float(q.b)

    def integrand(u):
        return np.prod(np.sqrt(bar_rho(spec, u)), axis=-1)

    integral, se = _sphere_integral(q, integrand)
    m, p = spec.m, spec.p
    log_volume_factor = 0.5 * p * math.log(2.0) + sum(math.log(s) for s in q.lattice.sqrt_spacing_sums)
    log_pref = (
        math.log(2.0)
        + log_volume_factor
        - 0.5 * (m + p) * math.log(2.0 * math.pi)
        + (m + p - 2) * math.log(b)
        - 0.5 * b * b
    )
    return _finish(q, log_pref, integral, se)


def tube_volume(q):
    """The index-manifold volume ``V`` entering :func:`tube_tail`."""
    est = tube_tail(q)
    m, p, b = q.spec.m, q.spec.p, float(q.b)
    log_v = (
        est.log_prob_raw
        - math.log(2.0)
        + 0.5 * (m + p) * math.log(2.0 * math.pi)
        - (m + p - 2) * math.log(b)
        + 0.5 * b * b
    )
    return math.exp(log_v)


def continuous_tail(q):
    """Bound for the maximum over the full rectangle (the renewal formula with ``nu = 1``)."""
    if q.method != "continuous":
        q = _with_method(q, "continuous")
    _require_volume(q.lattice)
    spec, b = q.spec, float(q.b)
    if spec.p == 2 and q.closed_form:
        integral, se = sphere_volume(spec.m) * sphere_moment_prod(spec), 0.0
    else:
        integral, se = _sphere_integral(q, lambda u: np.prod(bar_rho(spec, u), axis=-1))
    m, p = spec.m, spec.p
    log_pref = (
        math.log(q.lattice.volume)
        - 0.5 * m * math.log(2.0 * math.pi)
        + (m + 2 * p - 2) * math.log(b)
        - 0.5 * b * b
    )
    return _finish(q, log_pref, integral, se)


_DISPATCH = {"renewal": renewal_tail, "tube": tube_tail, "continuous": continuous_tail}


def _with_method(q, method):
    from dataclasses import replace

    return replace(q, method=method)


def tail_probability(q):
    """Evaluate ``q`` with the formula named by ``q.method``."""
    return _DISPATCH[q.method](q)


def tail_curve(spec, lattice, b_grid, method="renewal", **kwargs):
    """Tail estimates over a grid of thresholds with common quadrature directions."""
    return [tail_probability(TailQuery(spec, lattice, float(b), method, **kwargs)) for b in b_grid]

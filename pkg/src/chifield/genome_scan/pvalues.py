"""Genome-wide significance of the maximum two-locus statistic.

The analytic route treats the scan statistic of each chromosome pair as the
squared norm of a chi field on the product of the two marker lattices, with
pairs asymptotically independent:

    F(x) = 1 - prod_{c1 < c2} (1 - P(max_{T_c1 x T_c2} Y^2 >= x)).

The permutation route re-pairs individuals at random and records the maximum
statistic between the original and the permuted genotypes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .. import _rng
from ..errors import ConfigurationError
from ..field_model import CovarianceSpec, Lattice
from ..special_fn import NuMethod
from ..tail_approx import (
    DEFAULT_SAMPLES,
    METHODS,
    TailQuery,
    clamp,
    renewal_spacing,
    tail_probability,
)
from .scan import indicators, pair_statistics, scan

DESIGN_PRESET = {"f2": "f2", "bc": "bc"}


def _resolve_spec(design, preset):
    if preset is None:
        preset = DESIGN_PRESET[design]
    spec = preset if isinstance(preset, CovarianceSpec) else CovarianceSpec.preset(preset)
    expected = CovarianceSpec.preset(DESIGN_PRESET[design])
    if spec.m != expected.m:
        raise ConfigurationError(
            f"{design.upper()} data give a {expected.m}-df statistic but the field spec has m={spec.m}"
        )
    return spec


def _formula_exponent(method, m, p):
    return m + p - 2 if method == "tube" else m + 2 * p - 2


@dataclass(frozen=True)
class PairTail:
    chromosomes: tuple
    prob_raw: float
    prob: float
    flags: tuple = ()


@dataclass(frozen=True)
class AdjustedPValue:
    method: str
    x: float
    pvalue: float
    pairs: tuple = field(default=(), repr=False)

    @property
    def flags(self):
        return tuple(sorted({f for p in self.pairs for f in p.flags}))

    def to_dict(self):
        return {"method": self.method, "x": self.x, "pvalue": self.pvalue, "flags": list(self.flags)}


def pair_tail(spec, positions1, positions2, x, method="renewal", *, samples=DEFAULT_SAMPLES, seed=0,
              nu_method=None):
    """Clamped ``P(max Y^2 >= x)`` over the product of two marker lattices.

    Single-marker chromosomes contribute no axis. Below the mode of the
    leading-order expression (``b^2 < exponent``), where it is meaningless,
    its value at the mode is used so the result stays nonincreasing in ``x``;
    the exact single-point tail ``P(chi2_m >= x)`` is a floor throughout.
    """
    axes = [np.asarray(a, dtype=float) for a in (positions1, positions2)]
    keep = [i for i, a in enumerate(axes) if a.size > 1]
    single = float(stats.chi2.sf(x, spec.m))
    if not keep:
        return single, single, ()
    sub = spec.select_axes(keep)
    lattice = Lattice.from_positions([axes[i] for i in keep])
    b = max(math.sqrt(x), math.sqrt(_formula_exponent(method, sub.m, sub.p)))
    q = TailQuery(sub, lattice, b, method, samples=samples, seed=seed,
                  nu_method=NuMethod.parse(nu_method))
    est = tail_probability(q)
    flags = list(est.flags)
    if method == "renewal":
        flags = sorted(set(flags) | set(renewal_spacing(q)[1]))
    return est.prob_raw, max(est.prob_clamped, single), tuple(flags)


def adjusted_pvalue_report(result, preset=None, method="renewal", *, x=None, samples=DEFAULT_SAMPLES, seed=0,
                           nu_method=None):
    """Adjusted p-value with per-pair detail. See :func:`adjusted_pvalue`."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose from {METHODS}")
    spec = _resolve_spec(result.design, preset)
    x = result.global_max if x is None else float(x)
    if not x > 0:
        raise ValueError(f"the observed maximum must be > 0, got {x!r}")
    mm = result.marker_map
    cache = {}
    pairs = []
    log_survive = 0.0
    for c1, c2 in result.pairs:
        pos1, pos2 = mm.positions(c1), mm.positions(c2)
        key = (tuple(np.diff(pos1)), tuple(np.diff(pos2)))
        if key not in cache:
            cache[key] = pair_tail(spec, pos1, pos2, x, method, samples=samples, seed=seed, nu_method=nu_method)
        raw, prob, flags = cache[key]
        pairs.append(PairTail((c1, c2), raw, prob, flags))
        log_survive += math.log1p(-prob) if prob < 1.0 else -math.inf
    return AdjustedPValue(method, x, float(-math.expm1(log_survive)), tuple(pairs))


def adjusted_pvalue(result, preset=None, method="renewal", *, x=None, samples=DEFAULT_SAMPLES, seed=0,
                    nu_method=None):
    """Multiplicity-adjusted p-value of the scan maximum (or of ``x``).

    Per-pair tails come from :mod:`chifield.tail_approx` on lattices built
    from the marker positions (shifted to start at 0), clamped into ``[0, 1)``
    and combined as independent.
    """
    return adjusted_pvalue_report(result, preset, method, x=x, samples=samples, seed=seed,
                                  nu_method=nu_method).pvalue


INDEX_SETS = ("all", "matched")


@dataclass(frozen=True, eq=False)
class PermutationResult:
    observed: float
    null_maxima: np.ndarray
    skipped_tables: int
    index_set: str

    @property
    def permutations(self):
        return int(self.null_maxima.size)

    @property
    def exceedances(self):
        return int(np.sum(self.null_maxima >= self.observed))

    @property
    def pvalue(self):
        return (1 + self.exceedances) / (self.permutations + 1)

    def to_dict(self):
        return {
            "observed": self.observed,
            "permutations": self.permutations,
            "exceedances": self.exceedances,
            "pvalue": self.pvalue,
            "skipped_tables": self.skipped_tables,
            "index_set": self.index_set,
        }


def permutation_tests(data, permutations, seed, *, index_sets=INDEX_SETS, threads=1, observed=None):
    """Permutation nulls of the maximum statistic for several index sets at once.

    For each random relabelling ``pi`` of individuals, markers of the data are
    cross-tabulated against markers of the permuted data. ``"all"`` uses every
    marker pair, same-chromosome index pairs included; ``"matched"`` uses only
    the pairs the scan itself uses (first marker on an earlier chromosome than
    the second). Degenerate permuted tables are skipped and counted. All index
    sets share the same permutations.
    """
    permutations = int(permutations)
    if permutations < 1:
        raise ConfigurationError("permutations must be >= 1")
    for name in index_sets:
        if name not in INDEX_SETS:
            raise ConfigurationError(f"unknown index set {name!r}; choose from {INDEX_SETS}")
    if observed is None:
        observed = scan(data).global_max
    cats = data.categories
    r = len(cats)
    X = indicators(data.calls, cats)
    chrom = data.marker_map.chromosome_of
    masks = {"all": None, "matched": chrom[:, None] < chrom[None, :]}
    n = data.n_individuals

    def run(idx):
        perm = _rng.substream(seed, _rng.PERMUTATION, idx).permutation(n)
        t = pair_statistics(X, X[perm], r, r)
        out = []
        for name in index_sets:
            v = t if masks[name] is None else t[masks[name]]
            bad = np.isnan(v)
            out.append((float(np.max(v[~bad])) if (~bad).any() else -np.inf, int(bad.sum())))
        return out

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_perm = list(pool.map(run, range(permutations)))
    else:
        per_perm = [run(i) for i in range(permutations)]
    results = {}
    for k, name in enumerate(index_sets):
        maxima = np.array([o[k][0] for o in per_perm])
        skipped = sum(o[k][1] for o in per_perm)
        results[name] = PermutationResult(float(observed), maxima, skipped, name)
    return results


def permutation_test(data, permutations, seed, *, index_set="all", threads=1, observed=None):
    """Permutation null of the maximum statistic for one index set; see :func:`permutation_tests`."""
    return permutation_tests(data, permutations, seed, index_sets=(index_set,), threads=threads,
                             observed=observed)[index_set]


def permutation_pvalue(data, permutations, seed, *, index_set="all", threads=1):
    """``(1 + #{null max >= observed}) / (permutations + 1)``."""
    return permutation_test(data, permutations, seed, index_set=index_set, threads=threads).pvalue

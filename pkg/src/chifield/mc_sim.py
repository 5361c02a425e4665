"""Exact simulation of product-OU chi-square fields on a lattice.

Each Gaussian component is generated by the spatial autoregression

    Z(0,0) = e(0,0)
    Z(i,0) = a_i Z(i-1,0) + sqrt(1-a_i^2) e(i,0)
    Z(0,j) = b_j Z(0,j-1) + sqrt(1-b_j^2) e(0,j)
    Z(i,j) = a_i Z(i-1,j) + b_j Z(i,j-1) - a_i b_j Z(i-1,j-1)
             + sqrt(1-a_i^2) sqrt(1-b_j^2) e(i,j)

with ``a_i = exp(-rho_k1 D_1i)`` and ``b_j = exp(-rho_k2 D_2j)``. The recursion
factorises as an AR(1) filter along axis 1 followed by one along axis 2, which
is how it is computed here. The same per-axis filtering covers any ``p`` and
reproduces the Kronecker-product OU covariance exactly.

Random numbers come from one Philox substream per replicate (keyed by seed and
replicate index) read in ``(k, lattice index)`` order, converted to normals by
the inverse CDF. Replicates are therefore bit-reproducible whatever the
batching or number of threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import _rng
from .errors import ConfigurationError

# Elements per batch buffer (float64), about 32 MB.
_BATCH_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class SimPlan:
    spec: object
    lattice: object
    replicates: int
    seed: int
    b_grid: tuple
    threads: int = 1
    keep_maxima: bool = False

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ConfigurationError("replicates must be >= 1")
        grid = tuple(float(b) for b in self.b_grid)
        if not grid:
            raise ConfigurationError("b_grid must not be empty")
        if any(b < 0 or not math.isfinite(b) for b in grid):
            raise ConfigurationError("thresholds must be finite and >= 0")
        if any(b1 >= b2 for b1, b2 in zip(grid, grid[1:])):
            raise ConfigurationError("b_grid must be strictly increasing")
        if self.lattice.p != self.spec.p:
            raise ConfigurationError(f"lattice has {self.lattice.p} axes, spec has p={self.spec.p}")
        object.__setattr__(self, "b_grid", grid)
        object.__setattr__(self, "replicates", int(self.replicates))


@dataclass(frozen=True)
class EmpiricalTail:
    """Per-threshold exceedance counts of ``max Y^2 >= b^2`` over replicates."""

    b_grid: tuple
    counts: np.ndarray
    replicates: int
    maxima: np.ndarray | None = None

    @property
    def probs(self):
        return self.counts / self.replicates

    @property
    def std_errors(self):
        p = self.probs
        return np.sqrt(p * (1.0 - p) / self.replicates)

    def rows(self):
        return [
            {"b": b, "count": int(c), "prob": float(p), "std_error": float(s)}
            for b, c, p, s in zip(self.b_grid, self.counts, self.probs, self.std_errors)
        ]

    def __eq__(self, other):
        if not isinstance(other, EmpiricalTail):
            return NotImplemented
        same_maxima = (self.maxima is None and other.maxima is None) or (
            self.maxima is not None and other.maxima is not None and np.array_equal(self.maxima, other.maxima)
        )
        return (
            self.b_grid == other.b_grid
            and self.replicates == other.replicates
            and np.array_equal(self.counts, other.counts)
            and same_maxima
        )


def _coefficients(spec, lattice):
    """Per-axis ``(alpha, sqrt(1 - alpha^2))`` arrays of shape ``(n_i - 1, m)``."""
    out = []
    for i in range(lattice.p):
        rd = np.outer(lattice.spacings(i), spec.rho[:, i])
        alpha = np.exp(-rd)
        out.append((alpha, np.sqrt(-np.expm1(-2.0 * rd))))
    return out


def _filter_inplace(Z, coefs):
    """Apply the per-axis AR(1) recursion to ``Z`` of shape ``(*lattice, ..., m)``."""
    for axis, (alpha, scale) in enumerate(coefs):
        V = np.moveaxis(Z, axis, 0)
        if V.shape[0] < 2:
            continue
        tmp = np.empty_like(V[0])
        for i in range(1, V.shape[0]):
            Vi = V[i]
            np.multiply(Vi, scale[i - 1], out=Vi)
            np.multiply(V[i - 1], alpha[i - 1], out=tmp)
            Vi += tmp
    return Z


def ar_field(eps, spec, lattice):
    """Map innovations ``eps`` of shape ``(m, *lattice.shape)`` to the field ``Z``.

    The map is linear, so feeding unit vectors recovers its matrix.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (spec.m, *lattice.shape):
        raise ValueError(f"innovations must have shape {(spec.m, *lattice.shape)}, got {eps.shape}")
    Z = np.ascontiguousarray(np.moveaxis(eps, 0, -1))
    _filter_inplace(Z, _coefficients(spec, lattice))
    return np.moveaxis(Z, -1, 0)


def _innovations(spec, lattice, seed, replicate):
    g = _rng.substream(seed, _rng.FIELD, replicate)
    u = g.random((spec.m, *lattice.shape))
    u[u == 0.0] = 2.0**-60
    return ndtri(u, out=u)


def _batch_fields(spec, lattice, seed, start, count, coefs):
    """Fields for replicates ``start .. start+count-1``, shape ``(*lattice, count, m)``."""
    Z = np.empty((*lattice.shape, count, spec.m))
    for r in range(count):
        Z[..., r, :] = np.moveaxis(_innovations(spec, lattice, seed, start + r), 0, -1)
    return _filter_inplace(Z, coefs)


def _batch_maxima(spec, lattice, seed, start, count, coefs):
    Z = _batch_fields(spec, lattice, seed, start, count, coefs)
    y2 = np.square(Z[..., 0])
    for k in range(1, spec.m):
        y2 += np.square(Z[..., k])
    return y2.reshape(-1, count).max(axis=0)


def batch_size(spec, lattice):
    return max(1, _BATCH_ELEMENTS // (lattice.n_points * spec.m))


def simulate_maxima(spec, lattice, seed, replicates, start=0, threads=1):
    """``max_t sum_k Z_k(t)^2`` for each replicate index in ``[start, start+replicates)``."""
    coefs = _coefficients(spec, lattice)
    bs = batch_size(spec, lattice)
    chunks = [(s, min(bs, start + replicates - s)) for s in range(start, start + replicates, bs)]

    def run(chunk):
        return _batch_maxima(spec, lattice, seed, chunk[0], chunk[1], coefs)

    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts) if parts else np.empty(0)


def simulate_field(spec, lattice, seed, replicate_index):
    """Maximum of ``Y^2`` over the lattice for a single replicate."""
    return float(simulate_maxima(spec, lattice, seed, 1, start=replicate_index)[0])


def simulate_fields(spec, lattice, seed, replicates, start=0):
    """Full fields, shape ``(replicates, m, *lattice.shape)``; meant for small lattices."""
    coefs = _coefficients(spec, lattice)
    Z = _batch_fields(spec, lattice, seed, start, replicates, coefs)
    p = lattice.p
    return np.moveaxis(np.moveaxis(Z, p, 0), -1, 1)


def empirical_tail(plan):
    """Monte Carlo estimate of ``P(max Y^2 >= b^2)`` for every ``b`` in the plan."""
    maxima = simulate_maxima(plan.spec, plan.lattice, plan.seed, plan.replicates, threads=plan.threads)
    return tail_from_maxima(maxima, plan.b_grid, keep_maxima=plan.keep_maxima)


def tail_from_maxima(maxima, b_grid, keep_maxima=False):
    maxima = np.asarray(maxima, dtype=float)
    b = np.asarray(b_grid, dtype=float)
    srt = np.sort(maxima)
    counts = srt.size - np.searchsorted(srt, b * b, side="left")
    return EmpiricalTail(tuple(float(x) for x in b), counts, int(maxima.size), maxima if keep_maxima else None)

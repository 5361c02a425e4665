"""Chi-square random fields with direct-product Ornstein-Uhlenbeck covariance.

A field is described by a :class:`CovarianceSpec` (degrees of freedom ``m``,
index dimension ``p`` and the ``m x p`` matrix of decay rates) together with a
:class:`Lattice` of sampling positions. Component ``k`` of the underlying
Gaussian vector has correlation ``prod_i exp(-rho[k, i] * |h_i|)``.

The tail formulas all need integrals over the unit sphere of functions of the
direction-weighted decay rates

    bar_rho_i(u) = sum_k u_k**2 * rho[k, i],

which are provided here, both in closed form (where one is available) and by
Monte Carlo over uniformly distributed directions.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _rng
from .errors import ConfigurationError, NumericalError, UnsupportedConfiguration

PRESETS = {
    # Decay rates per Morgan for the four 1-df components of an F2 4-df scan.
    "f2": ((2.0, 2.0), (2.0, 4.0), (4.0, 2.0), (4.0, 4.0)),
    # Backcross: a single component.
    "bc": ((2.0, 2.0),),
}

# Repeating gap cycles (Morgans) for unequally spaced lattices; both average 0.01.
PATTERNS = {
    "I": (0.005, 0.01, 0.005, 0.01, 0.03, 0.005, 0.01, 0.005, 0.01, 0.01),
    "II": (0.005, 0.005, 0.03, 0.005, 0.005),
}

SPHERE_BLOCK = 1 << 16


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Degrees of freedom, index dimension and decay-rate matrix of a field."""

    m: int
    p: int
    rho: np.ndarray

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"m must be a positive integer, got {self.m!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigurationError(f"p must be a positive integer, got {self.p!r}")
        rho = _frozen(self.rho)
        if rho.shape != (self.m, self.p):
            raise ConfigurationError(
                f"rho must have shape ({self.m}, {self.p}), got {rho.shape}"
            )
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
            raise ConfigurationError("all decay rates rho[k][i] must be finite and > 0")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_rho(cls, rho):
        rho = np.atleast_2d(np.asarray(rho, dtype=float))
        return cls(rho.shape[0], rho.shape[1], rho)

    @classmethod
    def preset(cls, name):
        """Named presets: ``"f2"`` (m=4) and ``"bc"`` (m=1), both with p=2."""
        try:
            return cls.from_rho(PRESETS[name.lower()])
        except KeyError:
            raise ConfigurationError(
                f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
            ) from None

    def select_axes(self, axes):
        """Spec restricted to a subset of index axes."""
        axes = list(axes)
        return CovarianceSpec(self.m, len(axes), self.rho[:, axes])

    def to_dict(self):
        return {"m": self.m, "p": self.p, "rho": self.rho.tolist()}

    def __eq__(self, other):
        if not isinstance(other, CovarianceSpec):
            return NotImplemented
        return self.m == other.m and self.p == other.p and np.array_equal(self.rho, other.rho)

    def __hash__(self):
        return hash((self.m, self.p, self.rho.tobytes()))

    def __repr__(self):
        return f"CovarianceSpec(m={self.m}, p={self.p}, rho={self.rho.tolist()})"


@dataclass(frozen=True, eq=False)
class Lattice:
    """Product of per-axis sorted positions, each axis starting at 0 (Morgans).

    Axes with a single point are allowed; they carry no spacing and make the
    rectangle measure zero, which the tail formulas reject.
    """

    axes: tuple = field()

    def __post_init__(self):
        if len(self.axes) == 0:
            raise ConfigurationError("a lattice needs at least one axis")
        axes = []
        for i, ax in enumerate(self.axes):
            a = np.asarray(ax, dtype=float).ravel()
            if a.size == 0:
                raise ConfigurationError(f"axis {i} is empty")
            if not np.all(np.isfinite(a)):
                raise ConfigurationError(f"axis {i} has non-finite positions")
            if a[0] != 0.0:
                raise ConfigurationError(f"axis {i} must start at 0, starts at {a[0]!r}")
            if np.any(np.diff(a) <= 0):
                raise ConfigurationError(f"axis {i} positions must be strictly increasing")
            axes.append(_frozen(a))
        object.__setattr__(self, "axes", tuple(axes))

    @classmethod
    def regular(cls, extent, spacing):
        """Equally spaced axes ``0, D, 2D, ..., extent`` (one entry per axis)."""
        extent = np.atleast_1d(np.asarray(extent, dtype=float))
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), extent.shape)
        axes = []
        for L, D in zip(extent, spacing):
            if D <= 0 or L <= 0:
                raise ConfigurationError("extent and spacing must be positive")
            n = int(round(L / D))
            if n < 1 or abs(n * D - L) > 1e-9 * max(L, 1.0):
                raise ConfigurationError(f"extent {L} is not a multiple of spacing {D}")
            axes.append(np.arange(n + 1) * D)
        return cls(tuple(axes))

    @classmethod
    def from_spacings(cls, spacings):
        """Axes from per-axis sequences of consecutive gaps ``D_i1, D_i2, ...``."""
        axes = []
        for gaps in spacings:
            gaps = np.asarray(gaps, dtype=float)
            axes.append(np.concatenate([[0.0], np.cumsum(gaps)]))
        return cls(tuple(axes))

    @classmethod
    def from_pattern(cls, cycle, extent, p=2):
        """Repeat a cycle of gaps until ``extent`` is covered; same on every axis.

        ``cycle`` is a sequence of gaps or a key of :data:`PATTERNS`.
        """
        if isinstance(cycle, str):
            try:
                cycle = PATTERNS[cycle]
            except KeyError:
                raise ConfigurationError(f"unknown pattern {cycle!r}; choose from {sorted(PATTERNS)}") from None
        cycle = np.asarray(cycle, dtype=float)
        if cycle.size == 0 or np.any(cycle <= 0):
            raise ConfigurationError("pattern gaps must be positive")
        period = cycle.sum()
        reps = int(math.ceil(extent / period - 1e-9))
        gaps = np.tile(cycle, reps)
        cum = np.cumsum(gaps)
        gaps = gaps[: int(np.searchsorted(cum, extent - 1e-9 * extent)) + 1]
        return cls.from_spacings([gaps] * p)

    @classmethod
    def from_positions(cls, positions):
        """Axes from arbitrary sorted positions, shifted so each starts at 0."""
        axes = []
        for pos in positions:
            pos = np.asarray(pos, dtype=float)
            axes.append(pos - pos[0])
        return cls(tuple(axes))

    @property
    def p(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def n_points(self):
        return int(np.prod(self.shape))

    def spacings(self, i):
        """Gaps ``D_ij = d_ij - d_i,j-1`` along axis ``i``."""
        return np.diff(self.axes[i])

    @property
    def extents(self):
        return tuple(float(a[-1]) for a in self.axes)

    @property
    def volume(self):
        """Lebesgue measure of the enclosing rectangle."""
        return float(np.prod(self.extents))

    @property
    def mean_spacings(self):
        return tuple(float(a[-1]) / (a.size - 1) if a.size > 1 else 0.0 for a in self.axes)

    @property
    def sqrt_spacing_sums(self):
        return tuple(float(np.sum(np.sqrt(np.diff(a)))) for a in self.axes)

    def spacing_ratio(self, i):
        """Largest over smallest gap along axis ``i`` (1 for equal spacing)."""
        d = self.spacings(i)
        return float(d.max() / d.min()) if d.size else 1.0

    @property
    def degenerate_axes(self):
        return tuple(i for i, a in enumerate(self.axes) if a.size < 2)

    def to_dict(self):
        return {"axes": [a.tolist() for a in self.axes]}

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return self.p == other.p and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    def __hash__(self):
        return hash(tuple(a.tobytes() for a in self.axes))

    def __repr__(self):
        return f"Lattice(shape={self.shape}, extents={self.extents})"


def sphere_volume(m):
    """Surface area of the unit sphere in R^m, ``2 pi^(m/2) / Gamma(m/2)``."""
    return 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)


def bar_rho(spec, u, i=None):
    """Direction-weighted decay rate ``sum_k u_k^2 rho[k, i]``.

    ``u`` is a unit vector of length ``m`` or an ``(n, m)`` array of them.
    With ``i`` (0-based axis) the result is for that axis only; otherwise all
    ``p`` axes are returned along the last dimension.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != spec.m:
        raise ValueError(f"direction has length {u.shape[-1]}, spec has m={spec.m}")
    w = u * u
    if i is None:
        return w @ spec.rho
    if not 0 <= i < spec.p:
        raise ValueError(f"axis index {i} out of range for p={spec.p}")
    return w @ spec.rho[:, i]


def sphere_moment_prod(spec):
    """Closed form of ``E[bar_rho_1(U) bar_rho_2(U)]`` for uniform ``U``; p=2 only."""
    if spec.p != 2:
        raise UnsupportedConfiguration(
            f"closed-form sphere moment needs p=2, got p={spec.p}; use sphere_expectation_mc"
        )
    r1, r2 = spec.rho[:, 0], spec.rho[:, 1]
    m = spec.m
    return float((r1.sum() * r2.sum() + 2.0 * np.dot(r1, r2)) / (m * (m + 2)))


def _sphere_block(m, seed, b, size):
    g = _rng.substream(seed, _rng.SPHERE, b)
    x = g.standard_normal((size, m))
    x /= np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]
    return x


@lru_cache(maxsize=8)
def _sphere_points_cached(m, samples, seed):
    nblocks = -(-samples // SPHERE_BLOCK)
    blocks = [
        _sphere_block(m, seed, b, min(SPHERE_BLOCK, samples - b * SPHERE_BLOCK))
        for b in range(nblocks)
    ]
    pts = np.concatenate(blocks)
    pts.setflags(write=False)
    return pts


def sphere_points(m, samples, seed):
    """Uniform directions on the unit sphere in R^m (normalised Gaussians).

    Points are generated in fixed blocks of ``SPHERE_BLOCK`` with one counter
    based substream per block, so the array depends on ``(m, samples, seed)``
    only. The returned array is read-only and cached.
    """
    return _sphere_points_cached(int(m), int(samples), int(seed))


def sphere_expectation_mc(spec, f, samples=1_000_000, seed=0, threads=1):
    """Estimate ``E[f(U)]`` for ``U`` uniform on the sphere ``S^(m-1)``.

    Parameters
    ----------
    spec : CovarianceSpec
        Only ``spec.m`` is used.
    f : callable
        Vectorised integrand mapping an ``(n, m)`` array of unit vectors to
        ``n`` values.
    samples : int
        Number of directions, at least 2.
    seed : int
        Substream key; the result is a deterministic function of the seed.
    threads : int
        Worker threads used to evaluate blocks. Does not affect the result.

    Returns
    -------
    estimate, std_error : float
        Sample mean and ``sd / sqrt(samples)``. For ``m == 1`` the sphere is
        the two-point set ``{-1, +1}``; the exact average is returned with a
        zero standard error.

    Multiply by :func:`sphere_volume` to obtain the surface integral.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if spec.m == 1:
        vals = np.asarray(f(np.array([[1.0], [-1.0]])), dtype=float)
        _check_finite(vals, np.array([[1.0], [-1.0]]))
        return float(vals.mean()), 0.0

    pts = sphere_points(spec.m, samples, seed)
    starts = range(0, samples, SPHERE_BLOCK)

    def block_stats(start):
        u = pts[start : start + SPHERE_BLOCK]
        v = np.asarray(f(u), dtype=float)
        _check_finite(v, u)
        mean = v.mean()
        return v.size, mean, float(np.sum((v - mean) ** 2))

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            stats = list(pool.map(block_stats, starts))
    else:
        stats = [block_stats(s) for s in starts]

    # Chan et al. pairwise combination, always in block order.
    n, mean, m2 = stats[0]
    for nb, mb, m2b in stats[1:]:
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    sd = math.sqrt(m2 / (n - 1))
    return float(mean), sd / math.sqrt(n)


def _check_finite(values, points):
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericalError(
            f"integrand is not finite ({values[idx]!r}) at sphere point {points[idx].tolist()}"
        )


def load_config(source):
    """Build ``(CovarianceSpec, Lattice)`` from a JSON file, string or dict.

    Recognised keys::

        {"m": 4, "p": 2, "rho": [[...], ...]}   or   {"preset": "f2"}
        {"axes": [[0, 0.01, ...], ...]}
        {"extent": [1, 1], "spacing": [0.01, 0.01]}
        {"extent": 1, "pattern": [0.005, 0.01, ...]}   or   {"extent": 1, "pattern": "I"}

    Exactly one lattice description must be given.
    """
    if isinstance(source, dict):
        cfg = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ConfigurationError(f"cannot read config {source}: {exc}") from None
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")

    if "preset" in cfg:
        spec = CovarianceSpec.preset(str(cfg["preset"]))
    else:
        if "rho" not in cfg:
            raise ConfigurationError("config field 'rho' is required (or give 'preset')")
        try:
            spec = CovarianceSpec.from_rho(cfg["rho"])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"config field 'rho': {exc}") from None
        for key in ("m", "p"):
            if key in cfg and int(cfg[key]) != getattr(spec, key):
                raise ConfigurationError(
                    f"config field '{key}'={cfg[key]} disagrees with rho shape {spec.rho.shape}"
                )

    kinds = [k for k in ("axes", "spacing", "pattern") if k in cfg]
    if len(kinds) != 1:
        raise ConfigurationError("give exactly one of 'axes', 'extent'+'spacing', 'extent'+'pattern'")
    try:
        if "axes" in cfg:
            lattice = Lattice(tuple(cfg["axes"]))
        elif "spacing" in cfg:
            extent = cfg.get("extent")
            if extent is None:
                raise ConfigurationError("config field 'extent' is required with 'spacing'")
            extent = np.broadcast_to(np.asarray(extent, dtype=float), (spec.p,))
            lattice = Lattice.regular(extent, cfg["spacing"])
        else:
            if "extent" not in cfg:
                raise ConfigurationError("config field 'extent' is required with 'pattern'")
            lattice = Lattice.from_pattern(cfg["pattern"], float(cfg["extent"]), p=spec.p)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"lattice description: {exc}") from None

    if lattice.p != spec.p:
        raise ConfigurationError(f"lattice has {lattice.p} axes but spec has p={spec.p}")
    return spec, lattice

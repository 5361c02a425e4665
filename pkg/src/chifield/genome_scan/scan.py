"""Two-locus chi-square scan over all marker pairs on distinct chromosomes."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DegenerateTableError
from .tables import block_chi_square

DEFAULT_TOP_K = 20
DEFAULT_RADIUS = 0.10  # Morgans


def indicators(calls, categories):
    """0/1 float matrix of shape ``(n, len(categories) * M)``, category-major.

    Missing calls have all indicators zero, so products of indicators give
    pairwise-complete counts.
    """
    calls = np.asarray(calls)
    # float32 products are exact for counts below 2**24.
    return np.concatenate([(calls == g).astype(np.float32) for g in categories], axis=1)


def pair_counts(ind1, ind2, r, c):
    """Counts laid out ``(r, M1, c, M2)`` from category-major indicator blocks."""
    m1, m2 = ind1.shape[1] // r, ind2.shape[1] // c
    return (ind1.T @ ind2).astype(float).reshape(r, m1, c, m2)


def pair_statistics(ind1, ind2, r, c):
    """``(M1, M2)`` Pearson statistics between two indicator blocks; NaN if degenerate."""
    return block_chi_square(pair_counts(ind1, ind2, r, c), r, c)


@dataclass(frozen=True)
class Peak:
    rank: int
    statistic: float
    marker1: str
    chromosome1: int
    position1: float
    marker2: str
    chromosome2: int
    position2: float

    def to_dict(self):
        return {
            "rank": self.rank,
            "statistic": self.statistic,
            "marker1": self.marker1,
            "chromosome1": self.chromosome1,
            "position1_cM": round(self.position1 * 100.0, 10),
            "marker2": self.marker2,
            "chromosome2": self.chromosome2,
            "position2_cM": round(self.position2 * 100.0, 10),
        }


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Statistics ``T[c1, c2][j1, j2]`` for every chromosome pair ``c1 < c2``.

    Degenerate tables (an empty margin after pairwise deletion) are NaN and
    counted in ``degenerate``.
    """

    design: str
    marker_map: object
    n_individuals: int
    pair_stats: dict
    degenerate: int = 0

    @property
    def pairs(self):
        return tuple(self.pair_stats)

    @property
    def pair_maxima(self):
        out = {}
        for key, t in self.pair_stats.items():
            out[key] = float(np.nanmax(t)) if np.any(np.isfinite(t)) else float("nan")
        return out

    @property
    def global_max(self):
        vals = [v for v in self.pair_maxima.values() if np.isfinite(v)]
        if not vals:
            raise DegenerateTableError("every cross table in the scan is degenerate")
        return max(vals)

    @property
    def argmax(self):
        """``(marker1, marker2)`` ids at the global maximum (first in canonical order on ties)."""
        best = self.global_max
        for (c1, c2), t in self.pair_stats.items():
            hit = np.argwhere(t == best)
            if hit.size:
                j1, j2 = hit[0]
                ids1 = self.marker_map.indices(c1)
                ids2 = self.marker_map.indices(c2)
                return self.marker_map.ids[ids1[j1]], self.marker_map.ids[ids2[j2]]
        raise AssertionError("maximum not found")

    def peaks(self, top_k=DEFAULT_TOP_K, radius=DEFAULT_RADIUS):
        """Largest statistics, skipping any within ``radius`` Morgans of a stronger
        peak on both axes of the same chromosome pair."""
        mm = self.marker_map
        entries = []
        for (c1, c2), t in self.pair_stats.items():
            j1, j2 = np.nonzero(np.isfinite(t))
            if j1.size:
                entries.append((np.full(j1.size, c1), j1, np.full(j1.size, c2), j2, t[j1, j2]))
        if not entries:
            return []
        c1, j1, c2, j2, v = (np.concatenate(col) for col in zip(*entries))
        order = np.lexsort((j2, c2, j1, c1, -v))
        pos = {c: mm.positions(c) for c in mm.chromosomes}
        idx = {c: mm.indices(c) for c in mm.chromosomes}
        kept = []
        for k in order:
            a, b = int(c1[k]), int(c2[k])
            p1, p2 = pos[a][j1[k]], pos[b][j2[k]]
            if any(a == q.chromosome1 and b == q.chromosome2
                   and abs(p1 - q.position1) <= radius + 1e-12 and abs(p2 - q.position2) <= radius + 1e-12
                   for q in kept):
                continue
            kept.append(Peak(len(kept) + 1, float(v[k]), mm.ids[idx[a][j1[k]]], a, float(p1),
                             mm.ids[idx[b][j2[k]]], b, float(p2)))
            if len(kept) == top_k:
                break
        return kept


def scan(data, threads=1):
    """Pearson statistics for every marker pair on distinct chromosomes.

    Individuals missing a call at either marker are dropped for that pair only.
    """
    mm = data.marker_map
    chroms = mm.chromosomes
    if len(chroms) < 2:
        raise ConfigurationError("a scan needs markers on at least two chromosomes")
    cats = data.categories
    r = len(cats)
    blocks = {c: indicators(data.calls[:, mm.indices(c)], cats) for c in chroms}
    keys = list(itertools.combinations(chroms, 2))

    def run(key):
        c1, c2 = key
        return pair_statistics(blocks[c1], blocks[c2], r, r)

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            stats = list(pool.map(run, keys))
    else:
        stats = [run(k) for k in keys]
    for t in stats:
        t.setflags(write=False)
    degenerate = int(sum(np.isnan(t).sum() for t in stats))
    return ScanResult(data.design, mm, data.n_individuals, dict(zip(keys, stats)), degenerate)

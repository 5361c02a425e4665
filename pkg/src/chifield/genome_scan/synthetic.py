"""Synthetic crosses under Haldane's no-interference model.

Each gamete's strain of origin along a chromosome is a two-state Markov
chain that switches between adjacent markers ``d`` Morgans apart with
probability ``(1 - exp(-2 d)) / 2``, so indicators at distance ``d`` have
correlation ``exp(-2 d)``. Chromosomes are independent.
"""

from __future__ import annotations

import numpy as np

from .. import _rng
from .data import A, B, H, MISSING, GenotypeDataset, Marker, MarkerMap, parse_design


def regular_map(chromosomes=12, markers=20, spacing_cM=5.0):
    """Equally spaced markers, ids ``c<chromosome>m<index>``."""
    return MarkerMap(tuple(
        Marker(f"c{c}m{j + 1}", c, j * spacing_cM / 100.0)
        for c in range(1, chromosomes + 1) for j in range(markers)
    ))


def _gametes(rng, n, gaps):
    """``+1`` (strain A) / ``-1`` (strain B) origin along one chromosome, shape ``(n, L)``."""
    switch = 0.5 * -np.expm1(-2.0 * np.asarray(gaps))
    start = np.where(rng.random((n, 1)) < 0.5, 1, -1)
    flips = np.where(rng.random((n, len(gaps))) < switch, -1, 1)
    return start * np.cumprod(np.concatenate([np.ones((n, 1), dtype=int), flips], axis=1), axis=1)


def simulate_cross(marker_map, n, design="f2", seed=0, replicate=0, missing_rate=0.0):
    """A cross with no two-locus interaction.

    F2 genotypes combine two independent recombinant gametes; backcross
    genotypes combine one recombinant gamete with a strain-A gamete.
    """
    design = parse_design(design)
    rng = _rng.substream(seed, _rng.SYNTHETIC, replicate)
    cols = []
    for c in marker_map.chromosomes:
        gaps = np.diff(marker_map.positions(c))
        g1 = _gametes(rng, n, gaps)
        if design == "f2":
            g2 = _gametes(rng, n, gaps)
            geno = np.where(g1 != g2, H, np.where(g1 > 0, A, B))
        else:
            geno = np.where(g1 > 0, A, H)
        cols.append(geno)
    calls = np.concatenate(cols, axis=1)
    if missing_rate > 0:
        calls = np.where(rng.random(calls.shape) < missing_rate, MISSING, calls)
    return GenotypeDataset(marker_map, calls.astype(np.int8), design)


def plant_interaction(data, marker1, marker2, genotypes=("A", "A"), drop=0.8, seed=0, replicate=0):
    """Remove a fraction ``drop`` of individuals carrying ``genotypes`` at the two markers.

    Mimics selection against one joint genotype (for example hybrid
    incompatibility).
    """
    codes = {"A": A, "B": B, "H": H}
    mm = data.marker_map
    j1, j2 = mm.index(marker1), mm.index(marker2)
    hit = (data.calls[:, j1] == codes[genotypes[0]]) & (data.calls[:, j2] == codes[genotypes[1]])
    rng = _rng.substream(seed, _rng.SYNTHETIC, (1 << 32) + replicate)
    remove = hit & (rng.random(data.n_individuals) < drop)
    return data.subset(~remove)

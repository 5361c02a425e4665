"""Pearson chi-square statistics for two-locus cross tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateTableError


@dataclass(frozen=True, eq=False)
class CrossTable:
    """Joint genotype counts at two loci (rows: first locus, columns: second)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts)
        if c.ndim != 2:
            raise ValueError("a cross table is two-dimensional")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("cross table entries must be nonnegative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def shape(self):
        return self.counts.shape

    def __eq__(self, other):
        if not isinstance(other, CrossTable):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"CrossTable({self.counts.tolist()})"


def _as_counts(table):
    return table.counts if isinstance(table, CrossTable) else CrossTable(table).counts


def pearson_chi_square(table):
    """Uncorrected Pearson statistic ``sum (x_ij - e_ij)^2 / e_ij`` for independence."""
    x = _as_counts(table).astype(float)
    rows, cols = x.sum(axis=1), x.sum(axis=0)
    zr, zc = np.flatnonzero(rows == 0), np.flatnonzero(cols == 0)
    if zr.size or zc.size:
        parts = []
        if zr.size:
            parts.append(f"rows {zr.tolist()}")
        if zc.size:
            parts.append(f"columns {zc.tolist()}")
        raise DegenerateTableError(f"cross table has empty {' and '.join(parts)}", rows=zr, cols=zc)
    e = np.outer(rows, cols) / x.sum()
    return float(np.sum((x - e) ** 2 / e))


def chi_square_batch(counts):
    """Pearson statistics for a stack of tables ``(..., r, c)``; NaN where a margin is empty."""
    x = np.asarray(counts, dtype=float)
    rows = x.sum(axis=-1, keepdims=True)
    cols = x.sum(axis=-2, keepdims=True)
    n = rows.sum(axis=-2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        e = rows * cols / n
        t = np.sum((x - e) ** 2 / e, axis=(-2, -1))
    bad = (rows == 0).any(axis=(-2, -1)) | (cols == 0).any(axis=(-2, -1))
    return np.where(bad, np.nan, t)


def block_chi_square(C, r, c):
    """Pearson statistics from counts laid out as ``(r, M1, c, M2)``; returns ``(M1, M2)``.

    Same values as :func:`chi_square_batch` on the transposed stack, computed
    without strided reductions over the small table axes.
    """
    C = np.asarray(C, dtype=float)
    rows = C.sum(axis=2)
    cols = C.sum(axis=0)
    n = rows.sum(axis=0)
    out = np.zeros(n.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv_n = 1.0 / n
        for g in range(r):
            for h in range(c):
                e = rows[g] * cols[:, h] * inv_n
                d = C[g, :, h] - e
                out += d * d / e
    bad = (rows == 0).any(axis=0) | (cols == 0).any(axis=1)
    out[bad] = np.nan
    return out


def collapse_3x3(table):
    """The four 2x2 tables obtained by successively merging rows/columns of a 3x3 table."""
    x = _as_counts(table)
    if x.shape != (3, 3):
        raise ValueError(f"need a 3x3 table, got shape {x.shape}")
    x1 = x[:2, :2]
    x2 = np.array([[x[0, 0] + x[0, 1], x[0, 2]], [x[1, 0] + x[1, 1], x[1, 2]]])
    x3 = np.array([[x[0, 0] + x[1, 0], x[0, 1] + x[1, 1]], [x[2, 0], x[2, 1]]])
    x4 = np.array([[x[:2, :2].sum(), x[0, 2] + x[1, 2]], [x[2, 0] + x[2, 1], x[2, 2]]])
    return tuple(CrossTable(t) for t in (x1, x2, x3, x4))


def decompose_3x3(table):
    """Collapsed 2x2 tables and their statistics; the statistics sum to ``T`` up to ``O(n^-1/2)``."""
    tables = collapse_3x3(table)
    return tables, tuple(pearson_chi_square(t) for t in tables)

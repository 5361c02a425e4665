"""Marker maps and genotype matrices for two-strain crosses."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

A, B, H = 0, 1, 2
MISSING = -1

SYMBOLS = {"A": A, "B": B, "H": H}
MISSING_SYMBOLS = {"NA", "", "-", "."}
LETTERS = {A: "A", B: "B", H: "H", MISSING: "NA"}

# Genotype categories (table rows/columns) per design.
CATEGORIES = {"f2": (A, B, H), "bc": (A, H)}


def parse_design(design):
    d = str(design).lower()
    if d not in CATEGORIES:
        raise ConfigurationError(f"unknown design {design!r}; use 'f2' or 'bc'")
    return d


@dataclass(frozen=True)
class Marker:
    marker_id: str
    chromosome: int
    position: float  # Morgans


@dataclass(frozen=True, eq=False)
class MarkerMap:
    """Markers sorted by chromosome then position; positions in Morgans."""

    markers: tuple

    def __post_init__(self):
        ms = tuple(sorted(self.markers, key=lambda mk: (mk.chromosome, mk.position)))
        if not ms:
            raise ConfigurationError("marker map is empty")
        ids = [mk.marker_id for mk in ms]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigurationError(f"duplicate marker ids: {dup}")
        for prev, cur in zip(ms, ms[1:]):
            if prev.chromosome == cur.chromosome and not cur.position > prev.position:
                raise ConfigurationError(
                    f"markers {prev.marker_id} and {cur.marker_id} on chromosome {cur.chromosome} "
                    "do not have strictly increasing positions"
                )
        object.__setattr__(self, "markers", ms)

    @classmethod
    def from_records(cls, records, unit="cM"):
        """Build from ``(marker_id, chromosome, position)`` triples."""
        scale = {"cM": 0.01, "M": 1.0}[unit]
        return cls(tuple(Marker(str(i), int(c), float(p) * scale) for i, c, p in records))

    @classmethod
    def from_csv(cls, path):
        """Read ``marker_id,chromosome,position_cM`` (header required)."""
        records = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"marker_id", "chromosome", "position_cM"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ConfigurationError(f"{path}: header must contain {sorted(need)}")
            for line, row in enumerate(reader, start=2):
                try:
                    records.append((row["marker_id"].strip(), int(row["chromosome"]), float(row["position_cM"])))
                except (TypeError, ValueError) as exc:
                    raise ConfigurationError(f"{path}, line {line}: {exc}") from None
        return cls.from_records(records)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["marker_id", "chromosome", "position_cM"])
            for mk in self.markers:
                w.writerow([mk.marker_id, mk.chromosome, repr(round(mk.position * 100.0, 10))])

    def __len__(self):
        return len(self.markers)

    @property
    def ids(self):
        return tuple(mk.marker_id for mk in self.markers)

    @property
    def chromosomes(self):
        return tuple(sorted({mk.chromosome for mk in self.markers}))

    @property
    def chromosome_of(self):
        return np.array([mk.chromosome for mk in self.markers])

    def indices(self, chromosome):
        return np.flatnonzero(self.chromosome_of == chromosome)

    def positions(self, chromosome):
        return np.array([self.markers[i].position for i in self.indices(chromosome)])

    def index(self, marker_id):
        try:
            return self.ids.index(marker_id)
        except ValueError:
            raise KeyError(marker_id) from None

    def __eq__(self, other):
        if not isinstance(other, MarkerMap):
            return NotImplemented
        return self.markers == other.markers

    def __hash__(self):
        return hash(self.markers)


@dataclass(frozen=True, eq=False)
class GenotypeDataset:
    """Individuals x markers genotype codes (A=0, B=1, H=2, missing=-1).

    Columns follow the canonical order of ``marker_map``.
    """

    marker_map: MarkerMap
    calls: np.ndarray
    design: str = "f2"
    individual_ids: tuple = None

    def __post_init__(self):
        design = parse_design(self.design)
        calls = np.array(self.calls, dtype=np.int8)
        if calls.ndim != 2 or calls.shape[1] != len(self.marker_map):
            raise ConfigurationError(
                f"genotype matrix shape {calls.shape} does not match {len(self.marker_map)} markers"
            )
        allowed = np.array(CATEGORIES[design] + (MISSING,), dtype=np.int8)
        bad = ~np.isin(calls, allowed)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ConfigurationError(
                f"{design} design: invalid call {LETTERS.get(int(calls[i, j]), calls[i, j])} "
                f"for individual {i} at marker {self.marker_map.ids[j]}"
            )
        calls.setflags(write=False)
        ids = self.individual_ids
        if ids is None:
            ids = tuple(f"ind{i + 1}" for i in range(calls.shape[0]))
        if len(ids) != calls.shape[0]:
            raise ConfigurationError("individual_ids length does not match the genotype matrix")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "calls", calls)
        object.__setattr__(self, "individual_ids", tuple(str(i) for i in ids))

    @property
    def n_individuals(self):
        return self.calls.shape[0]

    @property
    def categories(self):
        return CATEGORIES[self.design]

    def subset(self, rows):
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return GenotypeDataset(
            self.marker_map, self.calls[rows], self.design, tuple(self.individual_ids[i] for i in rows)
        )

    @classmethod
    def from_csv(cls, marker_map, path, design="f2"):
        """Read ``individual_id`` then one column per marker with values A|B|H|NA."""
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigurationError(f"{path}: empty genotype file") from None
            cols = [h.strip() for h in header[1:]]
            unknown = [c for c in cols if c not in set(marker_map.ids)]
            if unknown:
                raise ConfigurationError(f"{path}: markers not in map: {unknown[:5]}")
            missing = sorted(set(marker_map.ids) - set(cols))
            if missing:
                raise ConfigurationError(f"{path}: map markers absent from genotypes: {missing[:5]}")
            order = [cols.index(mid) for mid in marker_map.ids]
            ids, rows = [], []
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ConfigurationError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
                codes = []
                for field_no, v in enumerate(row[1:], start=2):
                    v = v.strip().upper()
                    if v in SYMBOLS:
                        codes.append(SYMBOLS[v])
                    elif v in MISSING_SYMBOLS:
                        codes.append(MISSING)
                    else:
                        raise ConfigurationError(f"{path}, line {line}, field {field_no}: bad genotype {v!r}")
                ids.append(row[0].strip())
                rows.append([codes[j] for j in order])
        calls = np.array(rows, dtype=np.int8).reshape(len(rows), len(marker_map))
        return cls(marker_map, calls, design, tuple(ids))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["individual_id", *self.marker_map.ids])
            for iid, row in zip(self.individual_ids, self.calls):
                w.writerow([iid, *(LETTERS[int(v)] for v in row)])

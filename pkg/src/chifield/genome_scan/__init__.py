"""Two-locus interaction scans for experimental crosses."""

from .data import A, B, H, MISSING, GenotypeDataset, Marker, MarkerMap
from .pvalues import (
    AdjustedPValue,
    PermutationResult,
    adjusted_pvalue,
    adjusted_pvalue_report,
    pair_tail,
    permutation_pvalue,
    permutation_test,
    permutation_tests,
)
from .scan import Peak, ScanResult, scan
from .synthetic import plant_interaction, regular_map, simulate_cross
from .tables import CrossTable, chi_square_batch, collapse_3x3, decompose_3x3, pearson_chi_square

__all__ = [
    "A", "B", "H", "MISSING",
    "AdjustedPValue", "CrossTable", "GenotypeDataset", "Marker", "MarkerMap", "Peak",
    "PermutationResult", "ScanResult",
    "adjusted_pvalue", "adjusted_pvalue_report", "chi_square_batch", "collapse_3x3",
    "decompose_3x3", "pair_tail", "pearson_chi_square", "permutation_pvalue",
    "permutation_test", "permutation_tests", "plant_interaction", "regular_map", "scan", "simulate_cross",
]

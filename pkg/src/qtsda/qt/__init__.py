"""Extended quasi-Toeplitz backend."""

from .eqt import DEFAULT_THRESHOLD, CompactCorrection, EqtMatrix, StructureStats, toeplitz_times
from .symbol import LaurentSymbol

__all__ = [
    "DEFAULT_THRESHOLD",
    "CompactCorrection",
    "EqtMatrix",
    "LaurentSymbol",
    "StructureStats",
    "toeplitz_times",
]

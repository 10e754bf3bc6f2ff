"""Doubling algorithms for ``A1 X^2 + A0 X + A_{-1} = 0`` on dense and quasi-Toeplitz matrices."""

__version__ = "0.1.0"

from .algebra import AlgebraElement, DenseMatrix, OnesAction, residual_norm
from .errors import Breakdown, ModelInvalid, QtsdaError
from .models import (QuarterPlaneModel, build_coefficients, classify_drift, compute_symbol_g,
                     make_gtilde_rank1, make_gtilde_toeplitz, preset)
from .qt import EqtMatrix, LaurentSymbol
from .solver import (DefectCorrected, SolveReport, Standard, StochasticImproved, StopRule,
                     Termination, run_fixed_point, run_sda, solve_sda)

__all__ = [
    "AlgebraElement", "DenseMatrix", "OnesAction", "residual_norm",
    "Breakdown", "ModelInvalid", "QtsdaError",
    "QuarterPlaneModel", "build_coefficients", "classify_drift", "compute_symbol_g",
    "make_gtilde_rank1", "make_gtilde_toeplitz", "preset",
    "EqtMatrix", "LaurentSymbol",
    "DefectCorrected", "SolveReport", "Standard", "StochasticImproved", "StopRule",
    "Termination", "run_fixed_point", "run_sda", "solve_sda",
]

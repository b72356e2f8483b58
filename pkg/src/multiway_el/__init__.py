"""Multiway empirical likelihood for exchangeable two- and three-way arrays."""

from __future__ import annotations

from .data import LeaveOut, ThreeWayArray, TwoWayArray, read_csv, write_csv
from .el_core import ELProblem, ELSolution, Status, el_statistic, solve_dual
from .errors import (BracketFailure, CorrectionNotPD, DataFormatError, ELConvergenceError,
                     EstimatorError, MultiwayELError, SBMScaleError, SingularVariance)
from .estimators import CompositeLogit, GEEMoment, HorvitzThompson, Mean, make_estimator
from .mel import ConfidenceSet, MultiwayEL, mel_statistic, mmel_statistic, pseudo_values, q_terms
from .threeway import ThreeWayMEL
from .variance import eww_variance, iid_variance, mmw_variance, wald_interval, wald_statistic

__version__ = "0.1.0"

__all__ = [
    "BracketFailure",
    "CompositeLogit",
    "ConfidenceSet",
    "CorrectionNotPD",
    "DataFormatError",
    "ELConvergenceError",
    "ELProblem",
    "ELSolution",
    "EstimatorError",
    "GEEMoment",
    "HorvitzThompson",
    "LeaveOut",
    "Mean",
    "MultiwayEL",
    "MultiwayELError",
    "SBMScaleError",
    "SingularVariance",
    "Status",
    "ThreeWayArray",
    "ThreeWayMEL",
    "TwoWayArray",
    "el_statistic",
    "eww_variance",
    "iid_variance",
    "make_estimator",
    "mel_statistic",
    "mmel_statistic",
    "mmw_variance",
    "pseudo_values",
    "q_terms",
    "read_csv",
    "solve_dual",
    "wald_interval",
    "wald_statistic",
    "write_csv",
]

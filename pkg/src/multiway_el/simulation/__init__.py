"""Data generating processes and Monte Carlo coverage experiments."""

from __future__ import annotations

from .dgp import BipartiteSBMDGP, HoeffdingOracle, RandomEffectDGP, ThreeWayRandomEffectDGP, generate
from .edgeworth import EdgeworthDiagnostic, edgeworth_terms
from .experiment import (ConfigError, CoverageReport, ExperimentConfig, evaluate_replication,
                         replicate_statistics, run_cell, run_experiment)
from .report import format_table, read_report_csv, reports_to_csv

__all__ = [
    "BipartiteSBMDGP",
    "ConfigError",
    "CoverageReport",
    "EdgeworthDiagnostic",
    "ExperimentConfig",
    "HoeffdingOracle",
    "RandomEffectDGP",
    "ThreeWayRandomEffectDGP",
    "edgeworth_terms",
    "evaluate_replication",
    "format_table",
    "generate",
    "read_report_csv",
    "replicate_statistics",
    "reports_to_csv",
    "run_cell",
    "run_experiment",
]

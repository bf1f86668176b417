"""Density zoo, seeded experiments, reports and the command-line interface."""

from .config import KINDS, OUTPUT_ENV, SCHEMA_VERSION, ExperimentConfig, ReportRow
from .densities import ZOO, DensityOracle, get_density
from .experiments import (
    run_beta_moments,
    run_entropy_convergence,
    run_experiment,
    run_impact_level,
    run_spacing_law,
    run_tv_convergence,
    summarize,
)
from .report import write_report

"""Normalized steepest descent under matrix norms and its implicit bias on
multiclass linear classification."""
from .bias_metrics import (MetricsReport, PowerDiag, contraction_check, correlation,
                           decay_slope, margin_error, power_diagnostics, spectrum,
                           tan_angle)
from .densela import ALL_NORMS, NormKind, dual_norm, matrix_norm, power_step, svd
from .harness import (ExperimentConfig, ProbeSchedule, RunRecord, Sweep, build_config,
                      run_experiment, run_sweep)
from .linmodel import accuracy, ce_gradient, ce_loss, margin, relative_margin
from .maxmargin_ref import (ReferenceSolution, SolveConfig, solve_all_references,
                            solve_max_margin)
from .nsd_optim import NsdConfig, OptState, lmo, nsd_step, nucgd_power_step, run, step
from .report import emit_report
from .synthdata import Dataset, GenConfig, check_separability, generate

__version__ = "0.1.0"

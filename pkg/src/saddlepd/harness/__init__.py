"""Run plumbing: CLI, logs, rate fits and verification oracles."""

from .logs import CSV_COLUMNS, ConvergenceLog, rate_fit
from .runner import (RunManifest, build_problem, compute_reference, run_manifest,
                     run_replication)
from .verify import (SuiteReport, finite_diff_check, grid_saddle_oracle, moreau_suite,
                     projection_suite, prox_inequality_suite, schedule_identity_suite)

__all__ = [
    "CSV_COLUMNS", "ConvergenceLog", "rate_fit", "RunManifest", "build_problem",
    "compute_reference", "run_manifest", "run_replication", "SuiteReport",
    "finite_diff_check", "grid_saddle_oracle", "moreau_suite", "projection_suite",
    "prox_inequality_suite", "schedule_identity_suite",
]

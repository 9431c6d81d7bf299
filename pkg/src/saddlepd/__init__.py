"""Accelerated primal-dual solvers for convex-concave saddle problems."""

from .backtracking import (BacktrackParams, EkContext, backtrack_outer_step,
                           nonmonotone_tau_next, psi_bounds, run_apdb,
                           run_apdb_switched, tau_hat, test_function_ek,
                           test_function_ek_switched, test_function_ek_tilde)
from .conic import (ConeSpec, ConicProblem, build_saddle_from_conic,
                    distance_to_minus_cone, dual_bound_slater, nonneg_orthant,
                    optim_metrics, r_tilde, y_dagger)
from .core import (ENTROPY, EUCLIDEAN, BregmanGeometry, LipschitzTriple, SaddleOracle,
                   bregman_entropy, bregman_euclidean, entropy_prox_simplex,
                   project_box, project_box_hyperplane, project_orthant_ball,
                   project_simplex)
from .engine import (SolveReport, SolverConfig, StepState, apd_schedule_next,
                     check_initial_stepsizes, ergodic_update, gap, main_step,
                     recipe_stepsizes, run_apd)

__version__ = "0.1.0"


def solve(oracle, config=None, x0=None, y0=None, **kwargs):
    """Dispatch to the solver named by ``config.algorithm``."""
    config = SolverConfig() if config is None else config
    runner = {"apd": run_apd, "apdb": run_apdb, "apdb_switched": run_apdb_switched}
    return runner[config.algorithm](oracle, config, x0, y0, **kwargs)

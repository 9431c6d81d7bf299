"""Run manifests, problem construction, reference solutions and replications."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .. import solve
from ..backtracking import run_apdb
from ..conic import build_saddle_from_conic, optim_metrics
from ..engine import SolverConfig
from ..problems import (RPS, build_kernel_matrices, build_svm_saddle, gen_qcqp,
                        load_csv_dataset, make_blobs, make_svm_instance, matrix_game,
                        predict_labels, qcqp_dual_bound, qcqp_to_conic,
                        train_test_split)
from .logs import ConvergenceLog, rate_fit

__all__ = ["RunManifest", "ProblemSetup", "build_problem", "compute_reference",
           "run_replication", "run_manifest", "PROBLEM_KINDS", "REFERENCE_POLICIES",
           "SOLVER_KEYS"]

PROBLEM_KINDS = ("qcqp", "svm", "game")
REFERENCE_POLICIES = ("none", "long_run", "injected")
SOLVER_KEYS = tuple(f.name for f in fields(SolverConfig))

# long_run references get this multiple of the budget and this fraction of the tolerance
REFERENCE_BUDGET_FACTOR = 100
REFERENCE_TOL_FACTOR = 1e-4


@dataclass
class RunManifest:
    """Everything needed to reproduce a batch of replications.

    Replication ``r`` uses seed ``seed + r`` for both data generation and any
    randomness in the solve, so replications are independent and the output
    does not depend on the worker count.
    """

    problem: dict
    solver: dict = field(default_factory=dict)
    out: Optional[str] = None
    reference: str = "none"
    reference_path: Optional[str] = None
    reference_budget: Optional[int] = None
    reps: int = 1
    parallel: int = 1
    seed: int = 0
    timing: bool = True

    def validate(self):
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ValueError(f"problem kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        if self.reference not in REFERENCE_POLICIES:
            raise ValueError(f"reference policy must be one of {REFERENCE_POLICIES}")
        if self.reference == "injected":
            if not self.reference_path or not os.path.isfile(self.reference_path):
                raise ValueError("reference policy 'injected' needs an existing reference file")
        unknown = set(self.solver) - set(SOLVER_KEYS)
        if unknown:
            raise ValueError(f"unknown solver settings {sorted(unknown)}")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ValueError("reps must be a positive integer")
        if not isinstance(self.parallel, int) or self.parallel < 1:
            raise ValueError("parallel must be a positive integer")
        if self.reference_budget is not None and self.reference_budget < 1:
            raise ValueError("reference_budget must be positive")
        SolverConfig(**self.solver).validate()
        seeds = self.rep_seeds()
        if len(set(seeds)) != len(seeds):
            raise ValueError("replication seeds must be distinct")
        if self.out is not None:
            os.makedirs(self.out, exist_ok=True)
            if not os.access(self.out, os.W_OK):
                raise ValueError(f"output directory {self.out!r} is not writable")
        return self

    def rep_seeds(self):
        return [int(self.seed) + r for r in range(self.reps)]

    def config(self):
        return SolverConfig(**self.solver)

    def as_dict(self):
        return asdict(self)


@dataclass
class ProblemSetup:
    oracle: object
    x0: np.ndarray
    y0: np.ndarray
    # metrics(x, y, x_avg, y_avg, ref) -> dict for the run monitor
    metrics: Callable
    # describe(report, ref) -> dict of problem-specific final summary entries
    describe: Callable = lambda report, ref: {}
    # oracle used for long_run reference solves (unbounded formulation)
    reference_oracle: object = None
    # ref dict from a reference solution (x, y) pair
    make_ref: Callable = lambda x, y: {"x": x, "y": y}
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Problem builders
# ---------------------------------------------------------------------------

def _qcqp_setup(p, seed, algorithm):
    inst = gen_qcqp(int(p.get("n", 20)), int(p.get("m", 3)), seed,
                    strongly_convex=bool(p.get("strongly_convex", False)),
                    box_radius=float(p.get("box_radius", 10.0)))
    conic = qcqp_to_conic(inst)
    unbounded = build_saddle_from_conic(conic)
    info = {"n": inst.n, "m": inst.m, "mu": inst.mu}
    if algorithm == "apd":
        B, _, q_lower = qcqp_dual_bound(inst, conic)
        oracle = build_saddle_from_conic(conic, dual_bound=B)
        info.update(dual_bound=B, q_lower=q_lower)
    else:
        oracle = unbounded

    def metrics(x, y, x_avg, y_avg, ref):
        rho = None if ref is None else ref.get("value")
        om = optim_metrics(conic, x, rho)
        out = {"subopt": om.subopt, "infeas": om.infeas}
        if om.subopt is not None:
            out["stop"] = max(om.subopt, om.mean_violation)
        return out

    def describe(report, ref):
        om = optim_metrics(conic, report.x_final, None if ref is None else ref.get("value"))
        return {"objective": conic.rho(report.x_final), "mean_violation": om.mean_violation,
                "infeas": om.infeas, "subopt": om.subopt}

    return ProblemSetup(oracle=oracle, x0=np.zeros(inst.n), y0=np.zeros(inst.m),
                        metrics=metrics, describe=describe, reference_oracle=unbounded,
                        make_ref=lambda x, y: {"x": x, "y": y, "value": conic.rho(x)},
                        info=info)


def _svm_data(p, seed):
    if p.get("dataset"):
        data = load_csv_dataset(p["dataset"], p.get("label_column", "label"))
        return train_test_split(data, float(p.get("train_fraction", 0.8)), seed)
    return make_blobs(int(p.get("n_train", 60)), int(p.get("n_test", 20)),
                      int(p.get("dim", 2)), float(p.get("separation", 4.0)), seed)


def _svm_setup(p, seed, algorithm):
    train, test = _svm_data(p, seed)
    features = np.vstack([train.features, test.features])
    K_full = build_kernel_matrices(features, p.get("kernels", ("poly2", "gaussian", "linear")))
    tr = np.arange(train.n)
    te = np.arange(train.n, train.n + test.n)
    variant = p.get("variant", "l2")
    if variant == "l1":
        inst = make_svm_instance(K_full, train.labels, tr, "l1", C=float(p.get("C", 1.0)))
    else:
        inst = make_svm_instance(K_full, train.labels, tr, "l2", lam=float(p.get("lam", 1.0)))
    oracle = build_svm_saddle(inst, p.get("dual_geometry", "euclidean"))
    M = inst.M

    def metrics(x, y, x_avg, y_avg, ref):
        if ref is None:
            return {}
        L_ref = ref["value"]
        rel = abs(oracle.lagrangian(x, y) - L_ref) / max(abs(L_ref), 1e-300)
        return {"subopt": rel, "stop": rel}

    def describe(report, ref):
        out = {"lagrangian": oracle.lagrangian(report.x_final, report.y_final),
               "kernel_weights": [float(v) for v in report.y_final]}
        try:
            pred, _ = predict_labels(inst, report.x_final, report.y_final, K_full, tr, te)
            out["test_accuracy"] = float(np.mean(pred == test.labels))
        except ValueError as exc:
            out["test_accuracy"] = None
            out["accuracy_error"] = str(exc)
        return out

    return ProblemSetup(oracle=oracle, x0=np.zeros(inst.n_tr), y0=np.full(M, 1.0 / M),
                        metrics=metrics, describe=describe, reference_oracle=oracle,
                        make_ref=lambda x, y: {"x": x, "y": y,
                                               "value": oracle.lagrangian(x, y)},
                        info={"n_train": train.n, "n_test": test.n, "variant": variant,
                              "primal_radius": oracle.extras["primal_radius"]})


def _game_matrix(p, seed):
    spec = p.get("matrix", "rps")
    if isinstance(spec, str):
        if spec == "rps":
            return RPS
        if spec == "random":
            rng = np.random.default_rng(seed)
            rows = int(p.get("rows", 5))
            return rng.uniform(-1.0, 1.0, size=(rows, int(p.get("cols", rows))))
        with open(spec, encoding="utf-8") as fh:
            return np.array(json.load(fh), dtype=float)
    return np.array(spec, dtype=float)


def _game_setup(p, seed, algorithm):
    A = _game_matrix(p, seed)
    oracle = matrix_game(A, p.get("geometry", "euclidean"))

    def duality_gap(xa, ya):
        return float(np.max(A.T @ xa) - np.min(A @ ya))

    def metrics(x, y, x_avg, y_avg, ref):
        g = duality_gap(x_avg, y_avg)
        return {"gap": g, "stop": g}

    def describe(report, ref):
        return {"duality_gap": duality_gap(report.x_ergodic, report.y_ergodic),
                "value_estimate": float(report.x_ergodic @ A @ report.y_ergodic)}

    r, c = A.shape
    return ProblemSetup(oracle=oracle, x0=np.full(r, 1.0 / r), y0=np.full(c, 1.0 / c),
                        metrics=metrics, describe=describe, reference_oracle=oracle,
                        make_ref=lambda x, y: {"x": x, "y": y,
                                               "value": float(x @ A @ y)},
                        info={"shape": [r, c]})


_BUILDERS = {"qcqp": _qcqp_setup, "svm": _svm_setup, "game": _game_setup}


def build_problem(problem: dict, seed: int, algorithm: str = "apd") -> ProblemSetup:
    kind = problem.get("kind")
    if kind not in _BUILDERS:
        raise ValueError(f"problem kind must be one of {PROBLEM_KINDS}, got {kind!r}")
    return _BUILDERS[kind](problem, seed, algorithm)


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

def _target_budget(cfg: SolverConfig):
    # grad evaluations: two per iteration for APD, more with backtracking
    return cfg.max_grad_evals if cfg.max_grad_evals is not None else 2 * cfg.max_outer


def compute_reference(setup: ProblemSetup, cfg: SolverConfig, policy: str,
                      path=None, budget=None):
    """Reference solution dict (``x``, ``y``, ``value``) or None.

    ``long_run`` solves with non-monotone APDB for ``budget`` gradient
    evaluations (default 100x the run's budget) and stops once the relative
    iterate displacement drops below ``1e-4 * tol``.
    """
    if policy == "none":
        return None
    if policy == "injected":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        x = np.asarray(raw["x"], dtype=float)
        y = np.asarray(raw["y"], dtype=float)
        ref = setup.make_ref(x, y)
        if "value" in raw:
            ref["value"] = float(raw["value"])
        return ref
    budget = REFERENCE_BUDGET_FACTOR * _target_budget(cfg) if budget is None else int(budget)
    tol = REFERENCE_TOL_FACTOR * cfg.tol if cfg.tol > 0.0 else 1e-12
    ref_cfg = SolverConfig(algorithm="apdb", tau_bar=cfg.tau_bar, gamma0=cfg.gamma0,
                           eta=cfg.eta, delta=cfg.delta,
                           tau_max=cfg.tau_max if cfg.tau_max is not None else 10.0 * cfg.tau_bar,
                           max_outer=budget, max_grad_evals=budget, tol=tol)
    rep = run_apdb(setup.reference_oracle, ref_cfg, setup.x0, setup.y0)
    ref = setup.make_ref(rep.x_final, rep.y_final)
    ref["status"] = rep.status
    ref["grad_evals"] = rep.counters.grads
    return ref


# ---------------------------------------------------------------------------
# Replications
# ---------------------------------------------------------------------------

def _slopes(log: ConvergenceLog, T_values):
    out = {}
    n = len(log)
    if n >= 20:
        k_range = (max(1, n // 10), n)
        for metric in ("gap", "subopt"):
            try:
                out[metric] = rate_fit(log, metric, k_range)
            except ValueError:
                out[metric] = None
        try:
            out["T"] = rate_fit(np.asarray(T_values), "T", k_range)
        except ValueError:
            out["T"] = None
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(u) for u in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def run_replication(manifest: RunManifest, rep: int):
    """Solve one replication; returns ``(csv_text, summary_dict)``."""
    seed = manifest.rep_seeds()[rep]
    cfg = manifest.config()
    setup = build_problem(manifest.problem, seed, cfg.algorithm)
    lip = setup.oracle.lipschitz
    if ("recipe_alpha" not in manifest.solver and cfg.algorithm == "apd"
            and lip is not None and lip.L_xx > 0.0):
        # balances the two terms of the primal step: tau0 = (1-delta)/(2 L_xx)
        cfg = replace(cfg, recipe_alpha=lip.L_yx ** 2 / lip.L_xx)
    ref = compute_reference(setup, cfg, manifest.reference, manifest.reference_path,
                            manifest.reference_budget)

    def monitor(x, y, xa, ya):
        return setup.metrics(x, y, xa, ya, ref)

    reference = None if ref is None else (ref["x"], ref["y"])
    if reference is not None and setup.oracle is not setup.reference_oracle:
        # APD on a bounded dual: the reference must lie in the bounded set
        yr = np.asarray(ref["y"])
        radius = setup.oracle.extras.get("dual_radius")
        if radius is not None and np.linalg.norm(yr) > radius:
            reference = None
    start = time.perf_counter()
    report = solve(setup.oracle, cfg, setup.x0, setup.y0, reference=reference,
                   monitor=monitor)
    wall = time.perf_counter() - start
    log = ConvergenceLog.from_report(report, timing=manifest.timing)
    T_values = [r.T for r in report.records]
    last = log.rows[-1]
    summary = {
        "rep": rep,
        "seed": seed,
        "status": report.status,
        "message": report.message,
        "iterations": report.iterations,
        "counters": report.counters.as_dict(),
        "grad_evals": report.counters.grads,
        "inner_steps_total": int(sum(r.inner_steps for r in report.records)),
        "final": {"gap": last["gap"], "subopt": last["subopt"], "infeas": last["infeas"],
                  "T": report.T, "tau0": report.tau0, "sigma0": report.sigma0},
        "slopes": _slopes(log, T_values),
        "problem": {**setup.info, **setup.describe(report, ref)},
        "reference": None if ref is None else {
            k: v for k, v in ref.items() if k in ("value", "status", "grad_evals")},
    }
    if manifest.timing:
        summary["wall_time_s"] = wall
    return log.to_csv_text(), _jsonable(summary)


def _run_one(args):
    manifest, rep = args
    return run_replication(manifest, rep)


def run_manifest(manifest: RunManifest):
    """Execute every replication and write CSVs plus ``summary.json``.

    Returns the summary dict. Replications run in a process pool when
    ``parallel > 1``; results are merged in replication order.
    """
    manifest.validate()
    jobs = [(manifest, r) for r in range(manifest.reps)]
    if manifest.parallel > 1 and manifest.reps > 1:
        with ProcessPoolExecutor(max_workers=min(manifest.parallel, manifest.reps)) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    reps = []
    for r, (csv_text, summ) in enumerate(results):
        if manifest.out is not None:
            with open(os.path.join(manifest.out, f"rep_{r:03d}.csv"), "w",
                      encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
        reps.append(summ)
    cfg = manifest.config()
    tol_set = cfg.tol > 0.0
    all_converged = all(s["status"] == "converged" for s in reps)
    ok = all(s["status"] != "diverged" for s in reps) and (all_converged or not tol_set)
    summary = {"manifest": _jsonable(manifest.as_dict()), "all_converged": all_converged,
               "ok": ok, "replications": reps}
    if manifest.out is not None:
        with open(os.path.join(manifest.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary

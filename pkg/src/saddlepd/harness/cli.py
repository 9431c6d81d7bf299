"""Command-line front end.

Subcommands ``solve-qcqp``, ``solve-svm`` and ``solve-game`` run a
manifest built from flags (and an optional ``--config`` JSON/YAML file whose
keys mirror the flags; flags win). ``verify`` runs the oracle suites and
``rates`` fits convergence slopes to existing CSV logs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .logs import ConvergenceLog, rate_fit
from .runner import RunManifest, run_manifest

__all__ = ["main", "build_parser", "manifest_from_args"]

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INVALID = 2

# flag dest -> SolverConfig field
_SOLVER_FLAGS = {
    "algorithm": "algorithm", "mu": "mu", "delta": "delta", "c_alpha": "c_alpha",
    "c_beta": "c_beta", "eta": "eta", "tau_bar": "tau_bar", "gamma0": "gamma0",
    "tau_max": "tau_max", "max_outer": "max_outer", "max_inner": "max_inner",
    "max_grad_evals": "max_grad_evals", "tol": "tol", "ek_variant": "ek_variant",
    "restart_period": "restart_period", "tau0": "tau0", "sigma0": "sigma0",
    "recipe_alpha": "recipe_alpha",
}
_RUN_FLAGS = ("seed", "reps", "parallel", "out", "reference", "reference_file",
              "reference_budget", "timing")
_PROBLEM_FLAGS = {
    "solve-qcqp": ("n", "m", "strongly_convex", "box_radius"),
    "solve-svm": ("variant", "lam", "C", "n_train", "n_test", "dim", "separation",
                  "dual_geometry", "dataset", "label_column", "train_fraction"),
    "solve-game": ("matrix", "rows", "cols", "geometry"),
}
_KIND = {"solve-qcqp": "qcqp", "solve-svm": "svm", "solve-game": "game"}


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--algorithm", choices=("apd", "apdb", "apdb-switched"))
    g.add_argument("--mu", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--c-alpha", type=float)
    g.add_argument("--c-beta", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--tau-bar", type=float)
    g.add_argument("--gamma0", type=float)
    g.add_argument("--tau-max", type=float)
    g.add_argument("--tau0", type=float)
    g.add_argument("--sigma0", type=float)
    g.add_argument("--recipe-alpha", type=float)
    g.add_argument("--max-outer", type=int)
    g.add_argument("--max-inner", type=int)
    g.add_argument("--max-grad-evals", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--ek-variant", choices=("exact", "tilde"))
    g.add_argument("--restart-period", type=int)
    r = p.add_argument_group("run")
    r.add_argument("--seed", type=int)
    r.add_argument("--reps", type=int)
    r.add_argument("--parallel", type=int)
    r.add_argument("--out")
    r.add_argument("--config", help="JSON or YAML file whose keys mirror the flags")
    r.add_argument("--reference", choices=("none", "long_run", "injected"))
    r.add_argument("--reference-file")
    r.add_argument("--reference-budget", type=int)
    r.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="leave elapsed_s empty so CSVs are byte-reproducible")


def build_parser():
    parser = argparse.ArgumentParser(prog="saddlepd",
                                     description="Accelerated primal-dual saddle solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("solve-qcqp", help="random convex QCQP over a box")
    q.add_argument("--n", type=int)
    q.add_argument("--m", type=int)
    q.add_argument("--strongly-convex", action="store_const", const=True)
    q.add_argument("--box-radius", type=float)
    _add_solver_flags(q)

    s = sub.add_parser("solve-svm", help="multiple-kernel SVM")
    s.add_argument("--variant", choices=("l1", "l2"))
    s.add_argument("--lam", type=float)
    s.add_argument("--C", type=float)
    s.add_argument("--n-train", type=int)
    s.add_argument("--n-test", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--separation", type=float)
    s.add_argument("--dual-geometry", choices=("euclidean", "entropy"))
    s.add_argument("--dataset", help="CSV file with a header row")
    s.add_argument("--label-column")
    s.add_argument("--train-fraction", type=float)
    _add_solver_flags(s)

    g = sub.add_parser("solve-game", help="bilinear matrix game on simplices")
    g.add_argument("--matrix", help="'rps', 'random' or a JSON file with a 2-D array")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--geometry", choices=("euclidean", "entropy"))
    _add_solver_flags(g)

    v = sub.add_parser("verify", help="finite-difference, prox, Moreau and schedule suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--out")

    r = sub.add_parser("rates", help="fit log-log slopes to CSV logs")
    r.add_argument("csv", nargs="+")
    r.add_argument("--metric", default="gap")
    r.add_argument("--k-min", type=int)
    r.add_argument("--k-max", type=int)
    return parser


def _load_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a key-value mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def manifest_from_args(args) -> RunManifest:
    """Merge ``--config`` with explicit flags (flags override) into a manifest."""
    opts = _load_config(args.config) if getattr(args, "config", None) else {}
    allowed = set(_SOLVER_FLAGS) | set(_RUN_FLAGS) | set(_PROBLEM_FLAGS[args.command])
    unknown = set(opts) - allowed
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    for key in allowed:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    solver = {_SOLVER_FLAGS[k]: opts[k] for k in _SOLVER_FLAGS if k in opts}
    if "algorithm" in solver:
        solver["algorithm"] = solver["algorithm"].replace("-", "_")
    problem = {"kind": _KIND[args.command]}
    problem.update({k: opts[k] for k in _PROBLEM_FLAGS[args.command] if k in opts})
    return RunManifest(
        problem=problem, solver=solver, out=opts.get("out"),
        reference=opts.get("reference", "none"),
        reference_path=opts.get("reference_file"),
        reference_budget=opts.get("reference_budget"),
        reps=int(opts.get("reps", 1)), parallel=int(opts.get("parallel", 1)),
        seed=int(opts.get("seed", 0)), timing=bool(opts.get("timing", True)))


def _error(kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _cmd_solve(args):
    try:
        manifest = manifest_from_args(args)
        manifest.validate()
    except (ValueError, TypeError, OSError) as exc:
        _error("validation", str(exc))
        return EXIT_INVALID
    try:
        summary = run_manifest(manifest)
    except ValueError as exc:
        _error("validation", str(exc))
        return EXIT_INVALID
    for rep in summary["replications"]:
        print(json.dumps({"rep": rep["rep"], "seed": rep["seed"], "status": rep["status"],
                          "iterations": rep["iterations"], "grad_evals": rep["grad_evals"],
                          "final": rep["final"]}))
    if not summary["ok"]:
        bad = [r["rep"] for r in summary["replications"] if r["status"] != "converged"]
        _error("convergence", f"replications {bad} did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_verify(args):
    from .zoo import run_verification
    reports = run_verification(seed=args.seed, samples=args.samples)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} worst={r.worst:.3e}")
    ok = all(r.passed for r in reports)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.json"), "w", encoding="utf-8") as fh:
            json.dump({"ok": ok, "suites": [r.as_dict() for r in reports]}, fh, indent=2)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _cmd_rates(args):
    out = {}
    for path in args.csv:
        log = ConvergenceLog.from_csv(path)
        lo = args.k_min if args.k_min is not None else 1
        hi = args.k_max if args.k_max is not None else len(log)
        try:
            out[path] = rate_fit(log, args.metric, (lo, hi))
        except ValueError as exc:
            _error("rate_fit", f"{path}: {exc}")
            return EXIT_INVALID
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "rates":
        return _cmd_rates(args)
    return _cmd_solve(args)


if __name__ == "__main__":
    sys.exit(main())

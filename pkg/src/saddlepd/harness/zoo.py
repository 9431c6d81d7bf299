"""Small instances of every oracle family, for the verification suites."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..conic import build_saddle_from_conic, nonneg_orthant
from ..core import (project_box, project_box_hyperplane, project_orthant_ball,
                    project_simplex)
from ..problems import (RPS, bilinear_box_problem, build_kernel_matrices,
                        build_svm_saddle, gen_qcqp, make_blobs, make_svm_instance,
                        matrix_game, qcqp_dual_bound, qcqp_to_conic)
from .verify import (SuiteReport, domain_sampler, finite_diff_check, moreau_suite,
                     projection_suite, prox_inequality_suite, schedule_identity_suite)

__all__ = ["oracle_zoo", "projection_zoo", "run_verification"]


def oracle_zoo(seed=0):
    """List of ``(oracle, dim_x, dim_y)`` covering every problem family and geometry."""
    rng = np.random.default_rng(seed)
    out = []
    for geom in ("euclidean", "entropy"):
        out.append((matrix_game(RPS, geom), 3, 3))
    K = rng.standard_normal((4, 3))
    out.append((bilinear_box_problem(K, mu=0.5, c=rng.standard_normal(3)), 3, 4))
    for sc in (False, True):
        inst = gen_qcqp(6, 2, seed, strongly_convex=sc)
        conic = qcqp_to_conic(inst)
        B, _, _ = qcqp_dual_bound(inst, conic)
        tag = "_sc" if sc else ""
        for o in (build_saddle_from_conic(conic, dual_bound=B), build_saddle_from_conic(conic)):
            out.append((dataclasses.replace(o, name=o.name + tag), 6, 2))
    train, _ = make_blobs(12, 4, seed=seed)
    K_full = build_kernel_matrices(train.features)
    idx = np.arange(train.n)
    for variant, kw in (("l1", {"C": 1.0}), ("l2", {"lam": 1.0})):
        inst = make_svm_instance(K_full, train.labels, idx, variant, **kw)
        for geom in ("euclidean", "entropy"):
            out.append((build_svm_saddle(inst, geom), train.n, 3))
    return out


def projection_zoo(seed=0):
    """``(name, projection, sampler)`` triples."""
    rng = np.random.default_rng(seed)
    b = np.where(rng.random(8) < 0.5, 1.0, -1.0)
    b[0], b[1] = 1.0, -1.0

    def gauss(n, s=3.0):
        return lambda r: s * r.standard_normal(n)

    return [
        ("box", lambda v: project_box(v, -1.0, 1.0), gauss(6)),
        ("simplex", project_simplex, gauss(6)),
        ("orthant", lambda v: project_orthant_ball(v), gauss(5)),
        ("orthant_ball", lambda v: project_orthant_ball(v, 2.0), gauss(5)),
        ("box_hyperplane", lambda v: project_box_hyperplane(v, 1.0, b), gauss(8)),
        ("halfline_hyperplane", lambda v: project_box_hyperplane(v, np.inf, b), gauss(8)),
    ]


def _interior_points(oracle, dim_x, dim_y, n, rng):
    sx = domain_sampler(oracle.prox_f, dim_x, oracle.geom_x.kind)
    sy = domain_sampler(lambda z, g, t: oracle.prox_h(z, -np.asarray(g), t), dim_y,
                        oracle.geom_y.kind)
    return [(sx(rng), sy(rng)) for _ in range(n)]


def run_verification(seed=0, samples=100, fd_points=20, fd_tol=1e-6, h_fd=1e-6):
    """Every suite over the whole zoo; returns a list of :class:`SuiteReport`."""
    rng = np.random.default_rng(seed)
    reports = []
    for oracle, nx, ny in oracle_zoo(seed):
        label = f"{oracle.name}/{oracle.geom_y.kind}"
        pts = _interior_points(oracle, nx, ny, fd_points, rng)
        err = finite_diff_check(oracle, pts, h_fd)
        reports.append(SuiteReport(f"finite_diff[{label}]", err <= fd_tol, err,
                                   int(err > fd_tol), len(pts)))
        reports.append(prox_inequality_suite(oracle, nx, ny, samples=samples, seed=seed,
                                             name=f"prox_inequality[{label}]"))
    for name, proj, sampler in projection_zoo(seed):
        reports.append(projection_suite(proj, sampler, samples=samples, seed=seed,
                                        name=f"projection[{name}]"))
    reports.append(moreau_suite(nonneg_orthant(), 6, samples=samples, seed=seed))
    reports.append(schedule_identity_suite(seed=seed))
    return reports

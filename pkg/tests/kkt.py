"""Interior-point references for QCQP instances (test-only, needs cvxpy)."""

import numpy as np


def qcqp_kkt(inst):
    """``(x*, y*, value)`` from a conic interior-point solve at tight tolerances."""
    import cvxpy as cp

    n, m, R = inst.n, inst.m, inst.box_radius
    x = cp.Variable(n)
    cons = [0.5 * cp.quad_form(x, cp.psd_wrap(inst.A[j])) + inst.b[j] @ x - inst.c[j - 1] <= 0
            for j in range(1, m + 1)]
    box = [x <= R, x >= -R]
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(x, cp.psd_wrap(inst.A[0])) + inst.b[0] @ x),
                      cons + box)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    y = np.array([float(np.ravel(c.dual_value)[0]) for c in cons])
    return np.asarray(x.value, dtype=float), np.maximum(y, 0.0), float(prob.value)


def svm_saddle_value(oracle):
    """Saddle value of a kernel-SVM oracle via its epigraph QCQP.

    ``min_x max_l [-2 e'x + w_l x'G_l x] + lam |x|^2`` over the feasible
    cone (plus the box for the l1 variant).
    """
    import cvxpy as cp

    inst, G = oracle.extras["instance"], oracle.extras["G"]
    w, b = inst.weights, inst.labels
    x, t = cp.Variable(inst.n_tr), cp.Variable()
    cons = [w[l] * cp.quad_form(x, cp.psd_wrap(G[l])) <= t for l in range(len(G))]
    cons += [x >= 0, b @ x == 0]
    if inst.variant == "l1":
        cons.append(x <= inst.C)
    obj = -2 * cp.sum(x) + t + (inst.lam * cp.sum_squares(x) if inst.variant == "l2" else 0)
    prob = cp.Problem(cp.Minimize(obj), cons)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(prob.value)

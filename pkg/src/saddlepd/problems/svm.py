"""Multiple-kernel SVM as a saddle problem.

The learner picks kernel weights on the simplex, the SVM dual variable
``x`` plays against them:

``min_x max_{y in simplex} -2 e'x + sum_l (c/r_l) y_l x'G_l x + lam ||x||^2``

with ``G_l = diag(b) K_l diag(b)``. The l1 variant has ``0 <= x <= C`` and
``lam = 0``; the l2 variant has ``x >= 0`` and ``lam > 0``. Both require
``<b, x> = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..core import (ENTROPY, EUCLIDEAN, FEAS_TOL, LipschitzTriple, SaddleOracle,
                    entropy_prox_simplex, project_box_hyperplane, project_simplex)
from .common import lipschitz_upper

__all__ = [
    "KERNELS",
    "kernel_poly2",
    "kernel_gaussian",
    "kernel_linear",
    "build_kernel_matrices",
    "KernelSVMInstance",
    "make_svm_instance",
    "build_svm_saddle",
    "l2_primal_radius",
    "predict_labels",
]


def kernel_poly2(A, B):
    return (1.0 + A @ B.T) ** 2


def kernel_gaussian(A, B, width=0.1):
    # direct differences, so identical points give exactly exp(0) = 1
    return np.exp(-0.5 * cdist(A, B, "sqeuclidean") / width)


def kernel_linear(A, B):
    return A @ B.T


KERNELS = {"poly2": kernel_poly2, "gaussian": kernel_gaussian, "linear": kernel_linear}


def build_kernel_matrices(features, kernels: Sequence = ("poly2", "gaussian", "linear")):
    """Gram matrices normalized to unit diagonal: ``K_ij / sqrt(K_ii K_jj)``."""
    F = np.asarray(features, dtype=float)
    out = []
    for spec in kernels:
        k = KERNELS[spec] if isinstance(spec, str) else spec
        K = np.asarray(k(F, F), dtype=float)
        K = 0.5 * (K + K.T)
        d = np.diag(K).copy()
        if np.any(d <= 0.0):
            raise ValueError(f"kernel {spec!r} has a zero diagonal entry; cannot normalize")
        s = 1.0 / np.sqrt(d)
        Kn = K * np.outer(s, s)     # outer(s, s) is exactly symmetric
        np.fill_diagonal(Kn, 1.0)
        out.append(Kn)
    return out


@dataclass(frozen=True)
class KernelSVMInstance:
    """Training-block kernels plus model parameters.

    ``r`` holds the kernel traces (over all points, as in the normalization
    convention) and ``c_trace = sum(r)``.
    """

    K_tr: tuple
    labels: np.ndarray
    variant: str
    C: Optional[float]
    lam: float
    c_trace: float
    r: np.ndarray

    def __post_init__(self):
        if self.variant not in ("l1", "l2"):
            raise ValueError("variant must be 'l1' or 'l2'")
        if self.variant == "l1" and (self.C is None or not self.C > 0.0 or self.lam != 0.0):
            raise ValueError("l1 variant needs finite C > 0 and lam = 0")
        if self.variant == "l2" and (not self.lam > 0.0 or
                                     (self.C is not None and math.isfinite(self.C))):
            raise ValueError("l2 variant needs lam > 0 and no finite C")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")

    @property
    def M(self):
        return len(self.K_tr)

    @property
    def n_tr(self):
        return len(self.labels)

    @property
    def weights(self):
        """``c / r_l`` for every kernel."""
        return self.c_trace / np.asarray(self.r, dtype=float)


def make_svm_instance(K_full, labels_tr, train_idx, variant="l2", C=None, lam=0.0):
    """Slice the training block out of full (train + test) kernel matrices."""
    train_idx = np.asarray(train_idx)
    K_tr = tuple(np.ascontiguousarray(K[np.ix_(train_idx, train_idx)]) for K in K_full)
    r = np.array([np.trace(K) for K in K_full])
    if variant == "l2" and C is not None and math.isfinite(C):
        raise ValueError("l2 variant has no box constraint; leave C unset")
    return KernelSVMInstance(K_tr=K_tr, labels=np.asarray(labels_tr, dtype=float),
                             variant=variant, C=None if variant == "l2" else C,
                             lam=float(lam), c_trace=float(r.sum()), r=r)


def l2_primal_radius(G, w, lam):
    """Certified bound on ``||x*||`` for the l2 variant.

    ``x = 0`` is feasible with value 0, and for every vertex ``e_l`` of the
    simplex the objective dominates ``-2 e'x + x'H_l x`` with
    ``H_l = w_l G_l + lam I``. Hence ``x*'H_l x* <= 2 e'x*``, which gives
    ``||x*|| <= 2 ||H_l^{-1/2} e|| / sqrt(lambda_min(H_l))``. The crude
    ``2 sqrt(n) / lam`` is the ``G = 0`` case; the best bound is returned.
    """
    n = G.shape[1]
    e = np.ones(n)
    best = 2.0 * math.sqrt(n) / lam
    for wl, Gl in zip(w, G):
        evals, evecs = np.linalg.eigh(wl * Gl + lam * np.eye(n))
        evals = np.maximum(evals, lam)          # H_l >= lam I holds exactly
        proj = evecs.T @ e
        bound = 2.0 * math.sqrt(float(np.sum(proj ** 2 / evals))) / math.sqrt(evals[0])
        best = min(best, bound)
    return best


def build_svm_saddle(inst: KernelSVMInstance, dual_geometry="euclidean"):
    """Saddle oracle for the kernel-learning SVM.

    The ridge term ``lam ||x||^2`` is placed in ``f`` (modulus ``mu = 2 lam``)
    and the l2 primal domain is intersected with the ball of radius
    ``2 sqrt(n_tr)/lam``, which contains the optimal ``x`` and makes the
    Lipschitz constants global.
    """
    b = inst.labels
    n = inst.n_tr
    w = inst.weights
    G = np.stack([(b[:, None] * K) * b[None, :] for K in inst.K_tr])   # (M, n, n)
    lam = inst.lam
    norms = np.array([lipschitz_upper(Gl) for Gl in G])
    gnorm = float(norms.max())
    if inst.variant == "l1":
        C = float(inst.C)
        radius = C * math.sqrt(n)
        upper = C
    else:
        radius = l2_primal_radius(G, w, lam)
        upper = math.inf

    def project_x(v):
        x = project_box_hyperplane(v, upper, b)
        if inst.variant == "l2":
            nx = float(np.linalg.norm(x))
            if nx > radius:
                # the feasible set is a cone, so cone-with-ball projection is radial
                x = x * (radius / nx)
        return x

    def quad(x):
        return (G @ x) @ x

    def phi(x, y):
        return float(-2.0 * np.sum(x) + np.dot(w * np.asarray(y), quad(x)))

    def grad_x(x, y):
        return -2.0 + 2.0 * ((w * np.asarray(y)) @ (G @ x))

    def grad_y(x, y):
        return w * quad(np.asarray(x, dtype=float))

    def prox_f(xbar, g, tau):
        return project_x((np.asarray(xbar) - tau * np.asarray(g)) / (1.0 + 2.0 * lam * tau))

    def f_value(x):
        x = np.asarray(x, dtype=float)
        ok = (np.all(x >= -FEAS_TOL) and np.all(x <= upper + FEAS_TOL)
              and abs(float(b @ x)) <= 1e-8 * max(1.0, float(np.abs(x).sum()))
              and float(np.linalg.norm(x)) <= radius * (1.0 + 1e-9))
        return lam * float(x @ x) if ok else math.inf

    if dual_geometry == "entropy":
        geom_y = ENTROPY

        def prox_h(ybar, s, sigma):
            return entropy_prox_simplex(ybar, s, sigma)
    elif dual_geometry == "euclidean":
        geom_y = EUCLIDEAN

        def prox_h(ybar, s, sigma):
            return project_simplex(np.asarray(ybar) + sigma * np.asarray(s))
    else:
        raise ValueError("dual_geometry must be 'euclidean' or 'entropy'")

    def h_value(y):
        y = np.asarray(y, dtype=float)
        return 0.0 if (np.all(y >= -FEAS_TOL) and abs(y.sum() - 1.0) <= 1e-8) else math.inf

    wmax = float(np.max(w))
    L_xx = 2.0 * wmax * gnorm
    # grad_y is (w_l x'G_l x)_l, whose Jacobian has rows 2 w_l G_l x
    L_yx = 2.0 * radius * float(np.sqrt(np.sum((w * norms) ** 2)))
    lip = LipschitzTriple(L_xx=L_xx, L_yx=L_yx, L_yy=0.0)
    printed = {"L_xx": 2.0 * inst.M * gnorm,
               "L_yx": 2.0 * inst.M * math.sqrt(inst.M) * (inst.C or radius) * gnorm}
    return SaddleOracle(
        phi=phi, grad_x=grad_x, grad_y=grad_y, prox_f=prox_f, prox_h=prox_h,
        geom_x=EUCLIDEAN, geom_y=geom_y, mu=2.0 * lam, lipschitz=lip,
        f_value=f_value, h_value=h_value, affine_in_y=True,
        name=f"svm_{inst.variant}",
        extras={"instance": inst, "G": G, "gnorm": gnorm, "primal_radius": radius,
                "reference_constants": printed, "project_x": project_x})


def predict_labels(inst: KernelSVMInstance, alpha, y, K_full, train_idx, test_idx,
                   tol=1e-6):
    """Classify test points with the learned kernel ``sum_l eta_l K_l``.

    ``eta_l = y_l c / r_l``. The intercept is the median of the per-index
    values over all support indices: ``0 < alpha_i < C`` (l1) or
    ``alpha_i > 0`` (l2), with a ``tol`` band. Returns ``(labels, intercept)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    eta = np.asarray(y, dtype=float) * inst.weights
    train_idx = np.asarray(train_idx)
    test_idx = np.asarray(test_idx)
    K_star = sum(e * K for e, K in zip(eta, K_full))
    b = inst.labels
    ba = b * alpha
    K_tt = K_star[np.ix_(train_idx, train_idx)]
    if inst.variant == "l1":
        valid = (alpha > tol) & (alpha < inst.C - tol)
        base = b
    else:
        valid = alpha > tol
        base = b * (1.0 - inst.lam * alpha)
    if not np.any(valid):
        raise ValueError("no support index with a valid multiplier; try a different C or lam")
    cand = base[valid] - (ba @ K_tt)[valid]
    intercept = float(np.median(cand))
    scores = ba @ K_star[np.ix_(train_idx, test_idx)] + intercept
    return np.where(scores >= 0.0, 1.0, -1.0), intercept

"""Random convex QCQPs over a box.

``min 0.5 x'A_0x + b_0'x  s.t.  0.5 x'A_jx + b_j'x - c_j <= 0,  x in [-R, R]^n``
with ``A_j = L_j' S_j L_j`` for random orthonormal ``L_j`` and random
nonnegative diagonal ``S_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import minimize

from ..conic import (ConicProblem, dual_bound_slater, nonneg_orthant, r_tilde,
                     unconstrained_lower_bound)
from ..core import FEAS_TOL, project_box
from .common import lipschitz_upper

__all__ = ["QCQPInstance", "gen_qcqp", "qcqp_to_conic", "find_slater_point",
           "qcqp_dual_bound"]


@dataclass(frozen=True)
class QCQPInstance:
    """Index 0 of ``A``/``b`` is the objective; ``c`` holds the m constraint offsets."""

    A: Tuple[np.ndarray, ...]
    b: Tuple[np.ndarray, ...]
    c: np.ndarray
    box_radius: float = 10.0
    strongly_convex: bool = False
    seed: int = 0

    @property
    def n(self):
        return self.A[0].shape[0]

    @property
    def m(self):
        return len(self.A) - 1

    @property
    def mu(self):
        """Guaranteed lower bound on the smallest eigenvalue of ``A_0``."""
        return 1.0 if self.strongly_convex else 0.0

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A[0] @ x + self.b[0] @ x)

    def constraints(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([0.5 * x @ self.A[j] @ x + self.b[j] @ x - self.c[j - 1]
                         for j in range(1, self.m + 1)])


def _random_orthonormal(rng, n):
    # orthonormal basis for the range of a Gaussian matrix
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _random_psd(rng, n, lo, hi):
    lam = _random_orthonormal(rng, n)
    s = rng.uniform(lo, hi, size=n)
    s[rng.integers(n)] = lo   # the lower end is attained exactly
    A = lam.T @ (s[:, None] * lam)
    return 0.5 * (A + A.T)


def gen_qcqp(n, m, seed, strongly_convex=False, box_radius=10.0):
    """Generate a reproducible random instance.

    Merely convex: every ``S_j`` is uniform on ``[0, 100]`` with an exact
    zero. Strongly convex: ``S_0`` is uniform on ``[1, 101]`` with an exact
    one, so ``A_0 >= I``.
    """
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    rng = np.random.default_rng(seed)
    A, b = [], []
    for j in range(m + 1):
        if j == 0 and strongly_convex:
            A.append(_random_psd(rng, n, 1.0, 101.0))
        else:
            A.append(_random_psd(rng, n, 0.0, 100.0))
        b.append(rng.standard_normal(n))
    c = rng.uniform(0.0, 1.0, size=m)
    for arr in A + b + [c]:
        arr.setflags(write=False)
    return QCQPInstance(A=tuple(A), b=tuple(b), c=c, box_radius=float(box_radius),
                        strongly_convex=bool(strongly_convex), seed=int(seed))


def qcqp_to_conic(inst: QCQPInstance, use_strong_convexity=None):
    """Conic form with ``f`` the box indicator and ``g`` the quadratic objective.

    When the strong convexity is used (default for strongly convex
    instances), ``mu/2 ||x||^2`` moves from ``g`` into ``f`` so that the
    modulus belongs to the prox term.
    """
    if use_strong_convexity is None:
        use_strong_convexity = inst.strongly_convex
    mu = inst.mu if use_strong_convexity else 0.0
    R = inst.box_radius
    n, m = inst.n, inst.m
    A0 = inst.A[0] - mu * np.eye(n)
    b0 = inst.b[0]
    AJ = np.stack(inst.A[1:])           # (m, n, n)
    BJ = np.stack(inst.b[1:])           # (m, n)
    cJ = np.asarray(inst.c, dtype=float)

    def g_value(x):
        return float(0.5 * x @ A0 @ x + b0 @ x)

    def g_grad(x):
        return A0 @ x + b0

    def G_value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * ((AJ @ x) @ x) + BJ @ x - cJ

    def G_jacobian_T_apply(x, y):
        J = AJ @ np.asarray(x, dtype=float) + BJ     # rows are grad G_j(x)
        return np.asarray(y, dtype=float) @ J

    def in_box(x):
        return bool(np.all(np.abs(x) <= R + FEAS_TOL))

    if mu > 0.0:
        def prox_f(xbar, g, tau):
            return np.clip((np.asarray(xbar) / tau - g) / (mu + 1.0 / tau), -R, R)

        def f_value(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * mu * float(x @ x) if in_box(x) else math.inf
    else:
        def prox_f(xbar, g, tau):
            return project_box(np.asarray(xbar) - tau * np.asarray(g), -R, R)

        def f_value(x):
            return 0.0 if in_box(np.asarray(x, dtype=float)) else math.inf

    norms = np.array([lipschitz_upper(Aj) for Aj in inst.A[1:]])
    bnorms = np.linalg.norm(BJ, axis=1)
    # ||DG(x)|| <= ||DG(x)||_F over the box, whose radius is R sqrt(n)
    C_G = float(np.sqrt(np.sum((norms * R * math.sqrt(n) + bnorms) ** 2)))
    L_G = float(np.sqrt(np.sum(norms ** 2)))
    return ConicProblem(
        prox_f=prox_f, g_value=g_value, g_grad=g_grad, G_value=G_value,
        G_jacobian_T_apply=G_jacobian_T_apply, cone=nonneg_orthant(), m=m,
        L_g=lipschitz_upper(A0), C_G=C_G, L_G=L_G, mu=mu, f_value=f_value,
        name=f"qcqp_n{n}_m{m}_s{inst.seed}",
        extras={"instance": inst, "lmo": lambda cvec: -R * np.sign(cvec),
                "grad_rho": lambda x: inst.A[0] @ x + inst.b[0]})


def find_slater_point(inst: QCQPInstance):
    """Box point with a large constraint margin, from a smoothed
    ``min max_j G_j`` started at the origin (strictly feasible since c > 0)."""
    R = inst.box_radius
    AJ = np.stack(inst.A[1:])
    BJ = np.stack(inst.b[1:])
    cJ = np.asarray(inst.c)
    scale = 50.0

    def fun(x):
        G = 0.5 * ((AJ @ x) @ x) + BJ @ x - cJ
        top = G.max()
        w = np.exp(scale * (G - top))
        val = top + math.log(w.sum()) / scale
        grad = (w / w.sum()) @ (AJ @ x + BJ)
        return val, grad

    x0 = np.zeros(inst.n)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(-R, R)] * inst.n,
                   options={"maxiter": 500})
    best = x0
    if res.x is not None and np.max(inst.constraints(res.x)) < np.max(inst.constraints(x0)):
        best = np.clip(res.x, -R, R)
    return best


def qcqp_dual_bound(inst: QCQPInstance, conic: ConicProblem = None):
    """Slater-based radius for the QCQP multipliers.

    Returns ``(B, x_slater, q_lower)``; ``q_lower`` is a certified lower bound
    on the box-constrained objective minimum.
    """
    conic = qcqp_to_conic(inst) if conic is None else conic
    q_lower, _ = unconstrained_lower_bound(conic, np.zeros(inst.n),
                                           lmo=conic.extras["lmo"],
                                           grad_rho=conic.extras["grad_rho"])
    candidates = [np.zeros(inst.n), find_slater_point(inst)]
    best = None
    for xs in candidates:
        try:
            r_tilde(conic, xs)
        except ValueError:
            continue
        B = dual_bound_slater(conic, xs, q_lower)
        if best is None or B < best[0]:
            best = (B, xs)
    if best is None:
        raise ValueError("no strictly feasible point found")
    return best[0], best[1], q_lower

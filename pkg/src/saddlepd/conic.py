"""Conic constrained programs as saddle problems.

``min_x f(x) + g(x)  s.t.  G(x) in -K`` becomes
``min_x max_{y in K*} f(x) + g(x) + <G(x), y>``, optionally with the dual
restricted to a ball whose radius comes from a Slater point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import (EUCLIDEAN, FEAS_TOL, LipschitzTriple, SaddleOracle, as_vector,
                   zero_function)

__all__ = [
    "ConeSpec",
    "nonneg_orthant",
    "ConicProblem",
    "OptimMetrics",
    "build_saddle_from_conic",
    "distance_to_minus_cone",
    "moreau_residual",
    "k_convexity_violation",
    "r_tilde",
    "dual_bound_slater",
    "unconstrained_lower_bound",
    "optim_metrics",
    "literal_violation_statistic",
    "y_dagger",
]

SLATER_MARGIN = 1e-8


@dataclass(frozen=True)
class ConeSpec:
    """A closed convex cone ``K`` given through projections onto ``K*`` and ``-K``."""

    kind: str
    project_dual: Callable
    project_minus: Callable

    def __post_init__(self):
        if self.kind not in ("nonneg_orthant", "custom"):
            raise ValueError(f"unknown cone kind {self.kind!r}")


def nonneg_orthant():
    """``K = K* = R^m_+``."""
    return ConeSpec("nonneg_orthant",
                    project_dual=lambda v: np.maximum(np.asarray(v, dtype=float), 0.0),
                    project_minus=lambda v: np.minimum(np.asarray(v, dtype=float), 0.0))


@dataclass(frozen=True)
class ConicProblem:
    """Data of ``min f(x) + g(x) s.t. G(x) in -K``.

    ``G`` is accessed through its values and the transpose-Jacobian product
    ``(x, y) -> DG(x)^T y``; the Jacobian itself is never formed.

    Parameters
    ----------
    L_g : float
        Lipschitz constant of ``grad g``.
    C_G, L_G : float, optional
        Lipschitz constants of ``G`` and of its Jacobian over ``dom f``.
    """

    prox_f: Callable
    g_value: Callable
    g_grad: Callable
    G_value: Callable
    G_jacobian_T_apply: Callable
    cone: ConeSpec
    m: int
    L_g: float = 0.0
    C_G: Optional[float] = None
    L_G: Optional[float] = None
    mu: float = 0.0
    f_value: Callable = zero_function
    name: str = "conic"
    extras: dict = field(default_factory=dict, compare=False)

    def rho(self, x):
        """Objective ``f(x) + g(x)``."""
        return self.f_value(x) + self.g_value(x)


class OptimMetrics(NamedTuple):
    subopt: Optional[float]
    infeas: float
    mean_violation: float


def build_saddle_from_conic(p: ConicProblem, dual_bound=None, kappa=None):
    """Lagrangian saddle oracle of a conic program.

    With ``dual_bound = B`` the dual feasible set is ``K*`` intersected with
    the ball of radius ``B + kappa`` (``kappa`` defaults to ``B``), which
    makes ``grad_x`` globally Lipschitz and unlocks plain APD. Without it the
    oracle carries no Lipschitz constants.
    """
    radius = None
    lip = None
    if dual_bound is not None:
        if not dual_bound > 0.0:
            raise ValueError("dual_bound must be positive")
        kappa = dual_bound if kappa is None else kappa
        if not kappa > 0.0:
            raise ValueError("kappa must be positive")
        radius = dual_bound + kappa
        if p.C_G is not None and p.L_G is not None and p.C_G > 0.0:
            lip = LipschitzTriple(L_xx=p.L_g + radius * p.L_G, L_yx=p.C_G, L_yy=0.0)
    proj = p.cone.project_dual

    def project_h(v):
        w = proj(v)
        if radius is not None:
            nw = float(np.linalg.norm(w))
            if nw > radius:
                # cone intersected with a centred ball: radial scaling is exact
                w = w * (radius / nw)
        return w

    def prox_h(ybar, s, sigma):
        return project_h(np.asarray(ybar, dtype=float) + sigma * np.asarray(s, dtype=float))

    def h_value(y):
        y = np.asarray(y, dtype=float)
        if float(np.linalg.norm(proj(y) - y)) > 1e-9 * max(1.0, float(np.linalg.norm(y))):
            return math.inf
        if radius is not None and float(np.linalg.norm(y)) > radius * (1.0 + 1e-9) + FEAS_TOL:
            return math.inf
        return 0.0

    def phi(x, y):
        return float(p.g_value(x) + np.dot(p.G_value(x), y))

    def grad_x(x, y):
        return np.asarray(p.g_grad(x), dtype=float) + np.asarray(p.G_jacobian_T_apply(x, y))

    def grad_y(x, y):
        return np.asarray(p.G_value(x), dtype=float)

    return SaddleOracle(
        phi=phi, grad_x=grad_x, grad_y=grad_y, prox_f=p.prox_f, prox_h=prox_h,
        geom_x=EUCLIDEAN, geom_y=EUCLIDEAN, mu=p.mu, lipschitz=lip,
        f_value=p.f_value, h_value=h_value, affine_in_y=True,
        name=p.name + ("_bounded" if radius is not None else ""),
        extras={"conic": p, "dual_radius": radius, "project_h": project_h})


def distance_to_minus_cone(w, cone: ConeSpec):
    """``d_{-K}(w)``; for the orthant this is the norm of the positive part."""
    w = np.asarray(w, dtype=float)
    if cone.kind == "nonneg_orthant":
        return float(np.linalg.norm(np.maximum(w, 0.0)))
    return float(np.linalg.norm(w - cone.project_minus(w)))


def moreau_residual(w, cone: ConeSpec):
    """``(||w - P_{-K}(w) - P_{K*}(w)||, |<P_{-K}(w), P_{K*}(w)>|)``."""
    w = np.asarray(w, dtype=float)
    a = cone.project_minus(w)
    b = cone.project_dual(w)
    return float(np.linalg.norm(w - a - b)), abs(float(a @ b))


def k_convexity_violation(p: ConicProblem, x1, x2, lam):
    """Distance of ``G(lam x1 + (1-lam) x2) - lam G(x1) - (1-lam) G(x2)`` to ``-K``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    w = (np.asarray(p.G_value(lam * x1 + (1.0 - lam) * x2))
         - lam * np.asarray(p.G_value(x1)) - (1.0 - lam) * np.asarray(p.G_value(x2)))
    return distance_to_minus_cone(w, p.cone)


def r_tilde(p: ConicProblem, x_slater):
    """Slater margin ``min_j -G_j(x_slater)`` (orthant cone only)."""
    if p.cone.kind != "nonneg_orthant":
        raise NotImplementedError("closed-form Slater margin is only available for the orthant")
    G = np.asarray(p.G_value(as_vector(x_slater, "x_slater")), dtype=float)
    r = float(np.min(-G))
    if not r >= SLATER_MARGIN:
        raise ValueError(f"point is not strictly feasible (max G_j = {-r:.3e})")
    return r


def dual_bound_slater(p: ConicProblem, x_slater, q_lower):
    """Radius ``(rho(x_slater) - q_lower) / r_tilde`` containing every dual optimum.

    ``q_lower`` must lower-bound the dual function at some dual point, e.g.
    ``min_x rho(x)`` (the dual function at ``y = 0``).
    """
    r = r_tilde(p, x_slater)
    rho = float(p.rho(np.asarray(x_slater, dtype=float)))
    if rho < q_lower:
        raise ValueError("q_lower exceeds rho at the Slater point: weak duality violated")
    B = (rho - q_lower) / r
    if not B > 0.0:
        raise ValueError("dual bound is zero; supply a strictly smaller q_lower")
    return B


def unconstrained_lower_bound(p: ConicProblem, x0, max_iter=2000, tol=1e-8,
                              lmo: Optional[Callable] = None,
                              grad_rho: Optional[Callable] = None):
    """Lower bound on ``min_{x in dom f} rho(x)``, i.e. on the dual function at 0.

    Runs accelerated proximal gradient on ``f + g``. When a linear
    minimization oracle ``lmo(c) = argmin_{x in dom f} <c, x>`` and the full
    gradient of ``rho`` are available, the returned value is the certified
    linearization bound ``rho(x) + <grad rho(x), lmo - x>``; otherwise the
    final objective minus ``tol``.

    Returns ``(bound, x_hat)``.
    """
    x = as_vector(x0, "x0").copy()
    z = x.copy()
    step = 1.0 / max(p.L_g, 1e-12)
    t = 1.0
    prev = math.inf
    for _ in range(max_iter):
        x_new = p.prox_f(z, p.g_grad(z), step)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        val = float(p.rho(x))
        if abs(prev - val) <= 1e-14 * max(1.0, abs(val)):
            break
        prev = val
    val = float(p.rho(x))
    if lmo is not None and grad_rho is not None:
        gr = np.asarray(grad_rho(x), dtype=float)
        s = np.asarray(lmo(gr), dtype=float)
        return min(val, val + float(gr @ (s - x))), x
    return val - tol, x


def optim_metrics(p: ConicProblem, x, rho_ref=None):
    """Relative suboptimality, ``d_{-K}(G(x))`` and the clamped mean violation."""
    x = np.asarray(x, dtype=float)
    G = np.asarray(p.G_value(x), dtype=float)
    infeas = distance_to_minus_cone(G, p.cone)
    if p.cone.kind == "nonneg_orthant":
        mean_violation = float(np.mean(np.maximum(G, 0.0)))
    else:
        mean_violation = infeas / max(1, p.m)
    subopt = None
    if rho_ref is not None:
        subopt = abs(float(p.rho(x)) - rho_ref) / max(1.0, abs(rho_ref))
    return OptimMetrics(subopt, infeas, mean_violation)


def literal_violation_statistic(p: ConicProblem, x):
    """The unclamped statistic ``sum_j G_j(x) / n`` with ``n = dim x``."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(p.G_value(x))) / x.size


def y_dagger(p: ConicProblem, x_avg, bound):
    """Dual point of norm ``bound`` along ``P_{K*}(G(x_avg))``; zero if feasible."""
    v = np.asarray(p.cone.project_dual(np.asarray(p.G_value(np.asarray(x_avg, float)))),
                   dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros_like(v)
    return bound * v / nv

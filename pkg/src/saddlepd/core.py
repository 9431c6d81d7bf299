"""Saddle-problem types, Bregman geometries and exact prox/projection maps.

A saddle problem is ``min_x max_y f(x) + phi(x, y) - h(y)``. Everything a
solver needs to know about one instance lives in a :class:`SaddleOracle`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FEAS_TOL",
    "BregmanGeometry",
    "EUCLIDEAN",
    "ENTROPY",
    "LipschitzTriple",
    "SaddleOracle",
    "as_vector",
    "bregman_euclidean",
    "bregman_entropy",
    "project_box",
    "project_simplex",
    "entropy_prox_simplex",
    "project_box_hyperplane",
    "project_orthant_ball",
    "euclidean_prox",
    "euclidean_dual_prox",
    "indicator",
    "in_box",
    "in_simplex",
    "in_orthant",
    "zero_function",
]

FEAS_TOL = 1e-10


def as_vector(v, name="vector"):
    """Return ``v`` as a finite 1-D float array (a copy, marked read-only)."""
    arr = np.array(v, dtype=float, copy=True).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must have positive dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_dims(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Bregman distances
# ---------------------------------------------------------------------------

def bregman_euclidean(x, xbar):
    """Half squared Euclidean distance ``0.5 * ||x - xbar||^2``."""
    x = np.asarray(x, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    _check_dims(x, xbar)
    d = x - xbar
    return 0.5 * float(d @ d)


def bregman_entropy(y, ybar):
    """KL divergence ``sum y_i log(y_i / ybar_i)`` between simplex points.

    ``y`` may sit on the boundary of the simplex (``0 log 0 = 0``); ``ybar``
    must be strictly positive.
    """
    y = np.asarray(y, dtype=float)
    ybar = np.asarray(ybar, dtype=float)
    _check_dims(y, ybar)
    if np.any(ybar <= 0.0):
        raise ValueError("entropy distance needs a strictly positive anchor")
    if np.any(y < -FEAS_TOL) or abs(y.sum() - 1.0) > FEAS_TOL:
        raise ValueError("first argument is not in the unit simplex")
    yc = np.clip(y, 0.0, None)
    pos = yc > 0.0
    val = float(np.sum(yc[pos] * np.log(yc[pos] / ybar[pos])))
    # Tiny negative values can only come from round-off.
    return max(val, 0.0)


@dataclass(frozen=True)
class BregmanGeometry:
    """A distance-generating function and its Bregman distance.

    ``kind`` is ``"euclidean"`` (reference norm l2) or ``"entropy"``
    (reference norm l1, simplex only).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("euclidean", "entropy"):
            raise ValueError(f"unknown geometry {self.kind!r}")

    def distance(self, x, xbar):
        if self.kind == "euclidean":
            return bregman_euclidean(x, xbar)
        return bregman_entropy(x, xbar)

    def mirror_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return x.copy()
        if np.any(x <= 0.0):
            raise ValueError("entropy mirror map needs strictly positive x")
        return np.log(x) + 1.0

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "euclidean":
            return float(np.linalg.norm(v))
        return float(np.abs(v).sum())


EUCLIDEAN = BregmanGeometry("euclidean")
ENTROPY = BregmanGeometry("entropy")


@dataclass(frozen=True)
class LipschitzTriple:
    """Lipschitz constants of the coupling gradients.

    ``L_xx`` bounds the x-Lipschitz constant of grad_x phi(., y); ``L_yx`` and
    ``L_yy`` bound grad_y phi jointly in x and y.
    """

    L_xx: float
    L_yx: float
    L_yy: float = 0.0

    def __post_init__(self):
        if not self.L_yx > 0.0:
            raise ValueError("L_yx must be positive")
        if self.L_xx < 0.0 or self.L_yy < 0.0:
            raise ValueError("L_xx and L_yy must be nonnegative")


def zero_function(_x):
    return 0.0


@dataclass(frozen=True)
class SaddleOracle:
    """Callable description of ``min_x max_y f(x) + phi(x,y) - h(y)``.

    Parameters
    ----------
    phi, grad_x, grad_y : callable
        Coupling value and its partial gradients, each taking ``(x, y)``.
    prox_f : callable
        ``prox_f(xbar, g, tau) = argmin_x f(x) + <g, x> + D_X(x, xbar)/tau``.
    prox_h : callable
        ``prox_h(ybar, s, sigma) = argmin_y h(y) - <s, y> + D_Y(y, ybar)/sigma``.
    f_value, h_value : callable
        Values of ``f`` and ``h``; ``inf`` outside the domain. Only used for
        gap evaluation, never by the iteration itself.
    mu : float
        Strong-convexity modulus of ``f``.
    affine_in_y : bool
        True when ``phi(x, .)`` is affine, so ``L_yy = 0`` even if no
        Lipschitz constants are supplied.
    """

    phi: Callable
    grad_x: Callable
    grad_y: Callable
    prox_f: Callable
    prox_h: Callable
    geom_x: BregmanGeometry = EUCLIDEAN
    geom_y: BregmanGeometry = EUCLIDEAN
    mu: float = 0.0
    lipschitz: Optional[LipschitzTriple] = None
    f_value: Callable = zero_function
    h_value: Callable = zero_function
    affine_in_y: bool = False
    name: str = "saddle"
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("mu must be nonnegative")
        if self.mu > 0.0 and self.geom_x.kind != "euclidean":
            raise ValueError("strongly convex f requires the Euclidean primal geometry")
        if self.lipschitz is not None and self.lipschitz.L_yy == 0.0:
            object.__setattr__(self, "affine_in_y", True)

    @property
    def lyy_zero(self):
        return self.affine_in_y or (
            self.lipschitz is not None and self.lipschitz.L_yy == 0.0)

    def lagrangian(self, x, y):
        return self.f_value(x) + self.phi(x, y) - self.h_value(y)


# ---------------------------------------------------------------------------
# Projections and prox maps
# ---------------------------------------------------------------------------

def project_box(v, lo, hi):
    """Componentwise clamp of ``v`` to ``[lo, hi]``."""
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    return np.clip(np.asarray(v, dtype=float), lo, hi)


def project_simplex(v):
    """Euclidean projection onto the unit simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a nonempty 1-D vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0.0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def entropy_prox_simplex(ybar, s, sigma):
    """Entropic prox on the simplex: ``ybar * exp(sigma * s)``, normalized.

    Solves ``argmin_y <-s, y> + KL(y, ybar)/sigma`` over the simplex with a
    max-shift so the exponentials never overflow.
    """
    ybar = np.asarray(ybar, dtype=float)
    s = np.asarray(s, dtype=float)
    _check_dims(ybar, s)
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if np.any(ybar <= 0.0):
        raise ValueError("entropy prox needs a strictly positive anchor")
    logits = np.log(ybar) + sigma * s
    logits -= logits.max()
    w = np.exp(logits)
    out = w / w.sum()
    # Keep iterates strictly inside the simplex so KL stays finite.
    tiny = np.finfo(float).tiny
    if np.any(out <= 0.0):
        out = np.maximum(out, tiny)
        out /= out.sum()
    return out


def project_box_hyperplane(v, C, b, tol=1e-12, max_iter=500):
    """Project ``v`` onto ``{0 <= x <= C, <b, x> = 0}`` with ``b`` in {-1,+1}^n.

    ``C`` may be ``inf`` (orthant intersected with the hyperplane). The
    multiplier ``nu`` of the hyperplane solves ``g(nu) = <b, clip(v - nu b)>
    = 0``. ``g`` is nonincreasing and piecewise linear with kinks at
    ``b_i v_i`` and ``b_i (v_i - C)``, so we bisect over the sorted kinks and
    then solve the bracketing linear piece exactly.
    """
    v = np.asarray(v, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_dims(v, b)
    if not np.all(np.abs(b) == 1.0):
        raise ValueError("b must have entries in {-1, +1}")
    if not C > 0.0:
        raise ValueError("C must be positive")

    def clip(nu):
        return np.clip(v - nu * b, 0.0, C)

    def g(nu):
        return float(b @ clip(nu))

    r = (C if np.isfinite(C) else 1.0) + float(np.max(np.abs(v)))
    if g(-r) < 0.0 or g(r) > 0.0:
        raise ValueError("hyperplane multiplier could not be bracketed")
    kinks = b * v
    if np.isfinite(C):
        kinks = np.concatenate([kinks, b * (v - C)])
    pts = np.unique(np.concatenate([[-r, r], kinks[(kinks > -r) & (kinks < r)]]))
    lo, hi = 0, pts.size - 1
    for _ in range(max_iter):
        if hi - lo <= 1:
            break
        mid = (lo + hi) // 2
        if g(pts[mid]) >= 0.0:
            lo = mid
        else:
            hi = mid
    a_, b_ = pts[lo], pts[hi]
    ga, gb = g(a_), g(b_)
    if ga == 0.0:
        nu = a_
    elif gb == 0.0:
        nu = b_
    else:
        nu = a_ + ga * (b_ - a_) / (ga - gb)
    x = clip(nu)
    if abs(float(b @ x)) > tol * max(1.0, float(np.abs(x).sum())):
        # round-off on the last piece: one exact solve over the free set
        free = (v - nu * b > 0.0) & (v - nu * b < C)
        if np.any(free):
            fixed_sum = float(b[~free] @ x[~free])
            nu = (float(b[free] @ v[free]) + fixed_sum) / free.sum()
            x = clip(nu)
    return x


def project_orthant_ball(v, B=None):
    """Project onto the nonnegative orthant, optionally intersected with the
    Euclidean ball of radius ``B``."""
    w = np.maximum(np.asarray(v, dtype=float), 0.0)
    if B is None:
        return w
    if not B > 0.0:
        raise ValueError("ball radius must be positive")
    nrm = float(np.linalg.norm(w))
    if nrm > B:
        w = w * (B / nrm)
    return w


def euclidean_prox(projection):
    """Wrap a Euclidean projection ``P`` as ``prox(xbar, g, tau) = P(xbar - tau g)``.

    This is the prox of an indicator under ``D = 0.5 ||.||^2``. The same form
    serves the dual side after flipping the sign: see :func:`euclidean_dual_prox`.
    """
    def prox(xbar, g, tau):
        return projection(np.asarray(xbar) - tau * np.asarray(g))
    return prox


def euclidean_dual_prox(projection):
    def prox(ybar, s, sigma):
        return projection(np.asarray(ybar) + sigma * np.asarray(s))
    return prox


def indicator(member):
    """Turn a membership predicate into an indicator value function."""
    def value(x):
        return 0.0 if member(np.asarray(x, dtype=float)) else math.inf
    return value


def in_box(lo, hi, tol=FEAS_TOL):
    return lambda x: bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))


def in_simplex(tol=FEAS_TOL):
    return lambda y: bool(np.all(y >= -tol) and abs(y.sum() - 1.0) <= 1e-8)


def in_orthant(radius=None, tol=FEAS_TOL):
    def member(y):
        if np.any(y < -tol):
            return False
        return radius is None or float(np.linalg.norm(y)) <= radius * (1 + 1e-9) + tol
    return member

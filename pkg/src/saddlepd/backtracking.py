"""Backtracking accelerated primal-dual methods.

APDB estimates the Lipschitz constants locally: each outer iteration shrinks
``tau`` by ``eta`` until the computable test function certifies the step.
The switched variant updates x before y, which keeps the dual iterates
bounded on conic problems whose x-gradient is not globally Lipschitz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import LipschitzTriple, SaddleOracle, as_vector
from .engine import (CountingOracle, RunTracker, SolverConfig, StepState,
                     main_step)

__all__ = [
    "BacktrackParams",
    "EkContext",
    "BacktrackFailure",
    "BacktrackResult",
    "test_function_ek",
    "test_function_ek_tilde",
    "test_function_ek_switched",
    "backtrack_outer_step",
    "switched_step",
    "psi_bounds",
    "psi_switched",
    "tau_hat",
    "inner_iteration_cap",
    "nonmonotone_tau_next",
    "run_apdb",
    "run_apdb_switched",
]


EPS = float(np.finfo(float).eps)
ROUNDOFF_FACTOR = 16.0


class BacktrackFailure(RuntimeError):
    """Raised when ``max_inner`` trials all fail the step test."""

    def __init__(self, message, last_ek=None, last_bound=None, last_tau=None):
        super().__init__(message)
        self.last_ek = last_ek
        self.last_bound = last_bound
        self.last_tau = last_tau


@dataclass(frozen=True)
class BacktrackParams:
    delta: float = 1e-3
    c_alpha: float = 0.999 - 1e-3
    c_beta: float = 0.0
    eta: float = 0.7
    tau_bar: float = 1.0
    gamma0: float = 1.0
    tau_max: Optional[float] = None
    max_inner: int = 60
    mu: float = 0.0
    ek_variant: str = "exact"

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.c_alpha <= 0.0 or self.c_beta < 0.0:
            raise ValueError("need c_alpha > 0 and c_beta >= 0")
        if self.c_alpha + self.c_beta + self.delta > 1.0 + 1e-12:
            raise ValueError("c_alpha + c_beta + delta must be <= 1")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.tau_bar <= 0.0 or self.gamma0 <= 0.0:
            raise ValueError("tau_bar and gamma0 must be positive")

    @classmethod
    def from_config(cls, cfg: SolverConfig):
        return cls(delta=cfg.delta, c_alpha=cfg.c_alpha, c_beta=cfg.c_beta, eta=cfg.eta,
                   tau_bar=cfg.tau_bar, gamma0=cfg.gamma0, tau_max=cfg.tau_max,
                   max_inner=cfg.max_inner, mu=cfg.mu, ek_variant=cfg.ek_variant)


@dataclass
class EkContext:
    """Quantities of the current outer iteration that the step test needs.

    ``alpha_k``/``beta_k`` belong to the previous accepted iteration and stay
    fixed while ``tau`` shrinks.
    """

    x_k: np.ndarray
    y_k: np.ndarray
    grad_y_at_k: np.ndarray
    alpha_k: float
    beta_k: float
    tau_k: float
    sigma_k: float
    theta_k: float


def _sq_over(num_sq, denom, scale_sq):
    # 0^2/0 = 0; a nonzero numerator over 0 means beta was set to zero on a
    # problem whose gradient actually moves.
    if denom > 0.0:
        return num_sq / (2.0 * denom)
    if num_sq <= 1e-24 * max(1.0, scale_sq):
        return 0.0
    raise ValueError("0^2/0 convention hit with a nonzero numerator: "
                     "c_beta = 0 on a problem whose y-gradient depends on y")


def _ek_parts(oracle, ctx: EkContext, x, y, alpha_next, beta_next, tilde):
    """Return ``(E_k, grad_y(x, y), roundoff)``.

    ``roundoff`` bounds the floating-point error of the cancelling first
    line (a difference of nearly equal function values near convergence).
    """
    xk, yk = ctx.x_k, ctx.y_k
    dx = x - xk
    gx_k_y = oracle.grad_x(xk, y)
    lin = float(gx_k_y @ dx)
    if tilde:
        gx_xy = oracle.grad_x(x, y)
        lin_new = float(gx_xy @ dx)
        first = lin_new - lin
        mag = abs(lin_new) + abs(lin)
    else:
        p1, p0 = oracle.phi(x, y), oracle.phi(xk, y)
        first = p1 - p0 - lin
        mag = abs(p1) + abs(p0) + abs(lin)
    gy_xy = np.asarray(oracle.grad_y(x, y), dtype=float)
    gy_k_y = np.asarray(oracle.grad_y(xk, y), dtype=float)
    d1 = gy_xy - gy_k_y
    d2 = gy_k_y - ctx.grad_y_at_k
    scale = float(gy_k_y @ gy_k_y)
    val = (first
           - oracle.geom_x.distance(x, xk) / ctx.tau_k
           + _sq_over(float(d1 @ d1), alpha_next, scale)
           + _sq_over(float(d2 @ d2), beta_next, scale)
           - (1.0 / ctx.sigma_k - ctx.theta_k * (ctx.alpha_k + ctx.beta_k))
           * oracle.geom_y.distance(y, yk))
    return val, gy_xy, ROUNDOFF_FACTOR * EPS * mag


def test_function_ek(oracle, ctx: EkContext, x, y, alpha_next, beta_next):
    """Step test built from the linearization error of phi in x and the
    y-gradient drift; a step is certified when it is sufficiently negative."""
    return _ek_parts(oracle, ctx, np.asarray(x, float), np.asarray(y, float),
                     alpha_next, beta_next, tilde=False)[0]


def test_function_ek_tilde(oracle, ctx: EkContext, x, y, alpha_next, beta_next):
    """Variant replacing the linearization error by
    ``<grad_x phi(x,y) - grad_x phi(x_k,y), x - x_k>``; an upper bound on
    :func:`test_function_ek` for phi convex in x."""
    return _ek_parts(oracle, ctx, np.asarray(x, float), np.asarray(y, float),
                     alpha_next, beta_next, tilde=True)[0]


# PEP8 test discovery would otherwise try to collect these two as tests.
test_function_ek.__test__ = False
test_function_ek_tilde.__test__ = False


def _negligible_move(x_next, x, y_next, y):
    # below machine resolution the test compares rounding noise; nothing to certify
    tol = 64.0 * EPS
    return (float(np.linalg.norm(x_next - x)) <= tol * max(1.0, float(np.linalg.norm(x)))
            and float(np.linalg.norm(y_next - y)) <= tol * max(1.0, float(np.linalg.norm(y))))


def _sq_slack(d, ga, gb, denom):
    # floating-point error of ||ga - gb||^2 / (2 denom)
    if denom <= 0.0:
        return 0.0
    err = EPS * (float(np.linalg.norm(ga)) + float(np.linalg.norm(gb)))
    return (2.0 * float(np.linalg.norm(d)) * err + err * err) / (2.0 * denom)


def _ek_switched_parts(oracle, ctx: EkContext, x, y, alpha_next, beta_next, grad_x_at_k):
    gx_xy = np.asarray(oracle.grad_x(x, y), dtype=float)
    gx_x_yk = np.asarray(oracle.grad_x(x, ctx.y_k), dtype=float)
    d1 = gx_xy - gx_x_yk
    d2 = gx_x_yk - grad_x_at_k
    scale = float(gx_x_yk @ gx_x_yk)
    val = (_sq_over(float(d1 @ d1), alpha_next, scale)
           - oracle.geom_y.distance(y, ctx.y_k) / ctx.sigma_k
           + _sq_over(float(d2 @ d2), beta_next, scale)
           - (1.0 / ctx.tau_k - ctx.theta_k * (ctx.alpha_k + ctx.beta_k))
           * oracle.geom_x.distance(x, ctx.x_k))
    slack = ROUNDOFF_FACTOR * (_sq_slack(d1, gx_xy, gx_x_yk, alpha_next)
                               + _sq_slack(d2, gx_x_yk, grad_x_at_k, beta_next))
    return val, gx_xy, slack


def test_function_ek_switched(oracle, ctx: EkContext, x, y, alpha_next, beta_next,
                              grad_x_at_k):
    """Step test for the x-first update order.

    Returns ``(value, grad_x(x, y))`` so the caller can reuse the gradient.
    """
    val, gx, _ = _ek_switched_parts(oracle, ctx, np.asarray(x, float), np.asarray(y, float),
                                    alpha_next, beta_next, grad_x_at_k)
    return val, gx


test_function_ek_switched.__test__ = False


# ---------------------------------------------------------------------------
# Step-size theory helpers
# ---------------------------------------------------------------------------

def psi_bounds(lip: LipschitzTriple, gamma0, c_alpha, c_beta, delta):
    """Lower bounds on the backtracked step: returns ``(psi1, psi2, zeta, psi)``.

    ``psi2`` is ``inf`` when ``L_yy = 0``; ``zeta`` is ``inf`` when
    ``L_xx = 0`` and ``psi1`` then takes its continuous limit
    ``sqrt((1-delta) c_alpha / gamma0) / L_yx``.
    """
    Lxx, Lyx, Lyy = lip.L_xx, lip.L_yx, lip.L_yy
    if Lxx > 0.0:
        q = 4.0 * (1.0 - delta) * gamma0 / c_alpha * (Lyx / Lxx) ** 2
        zeta = q / (1.0 + math.sqrt(1.0 + q))  # = -1 + sqrt(1 + q), cancellation-free
        psi1 = c_alpha * Lxx / (2.0 * gamma0 * Lyx ** 2) * zeta
    else:
        zeta = math.inf
        psi1 = math.sqrt((1.0 - delta) * c_alpha / gamma0) / Lyx
    if Lyy > 0.0:
        psi2 = math.sqrt(max(c_beta * (1.0 - (c_alpha + c_beta + delta)), 0.0)) / (gamma0 * Lyy)
        psi = min(psi1, psi2)
    else:
        psi2 = math.inf
        psi = psi1
    return psi1, psi2, zeta, psi


def tau_hat(lip: LipschitzTriple, gamma_k, c_alpha, c_beta, delta):
    """Largest ``tau`` for which the global-constant bound certifies the step."""
    Lxx, Lyx, Lyy = lip.L_xx, lip.L_yx, lip.L_yy
    first = 2.0 * (1.0 - delta) / (Lxx + math.sqrt(Lxx ** 2 + 4.0 * (1.0 - delta)
                                                  * Lyx ** 2 * gamma_k / c_alpha))
    if Lyy > 0.0:
        second = math.sqrt(max(c_beta * (1.0 - (c_alpha + c_beta + delta)), 0.0)) / (gamma_k * Lyy)
        return min(first, second)
    return first


def psi_switched(L_xy, L_xx_bar, gamma0, c_alpha, c_beta, delta):
    """Step floor of the x-first variant, from the x-gradient constants
    ``L_xy`` (in y) and ``L_xx_bar`` (in x, over the dual bound ball)."""
    a = math.sqrt(c_alpha * (1.0 - delta)) / (L_xy * math.sqrt(gamma0)) if L_xy > 0 else math.inf
    b = (math.sqrt(max(c_beta * (1.0 - (c_alpha + c_beta + delta)), 0.0)) / L_xx_bar
         if L_xx_bar > 0 else math.inf)
    return min(a, b)


def inner_iteration_cap(tau_start, psi, eta):
    """``1 + ceil(log_{1/eta}(tau_start / psi))``, floored at 1."""
    if tau_start <= psi:
        return 1
    return 1 + math.ceil(math.log(tau_start / psi) / math.log(1.0 / eta) - 1e-12)


def nonmonotone_tau_next(tau_k, tau_prev, gamma_k, gamma_next, tau_max):
    """Optimistic step growth, capped at ``tau_max``."""
    proposal = tau_k * math.sqrt((gamma_k / gamma_next) * (1.0 + tau_k / tau_prev))
    return min(proposal, tau_max)


# ---------------------------------------------------------------------------
# One outer iteration
# ---------------------------------------------------------------------------

@dataclass
class BacktrackResult:
    x_next: np.ndarray
    y_next: np.ndarray
    tau: float
    sigma: float
    theta: float
    inner_count: int
    ek: float
    ek_bound: float
    grad_at_k: np.ndarray       # y-gradient (or x-gradient when switched) at (x_k, y_k)
    grad_at_next: np.ndarray    # same gradient at the accepted point


def backtrack_outer_step(oracle, state: StepState, params: BacktrackParams,
                         x, y, x_prev, y_prev, grad_y_prev, alpha_k, beta_k,
                         grad_y_bar=None):
    """Shrink ``tau`` geometrically until the step test accepts.

    ``state.tau`` is the first trial; on return ``state`` holds the accepted
    ``tau``, ``sigma`` and ``theta``.
    """
    tilde = params.ek_variant == "tilde"
    tau = state.tau
    gy_bar = grad_y_bar
    ek = bound = None
    for inner in range(1, params.max_inner + 1):
        state.set_tau(tau)
        sigma = state.sigma
        a_next = params.c_alpha / sigma
        b_next = params.c_beta / sigma
        x_next, y_next, gy_bar = main_step(oracle, x, y, x_prev, y_prev, tau, sigma,
                                           state.theta, grad_y_prev=grad_y_prev,
                                           grad_y_bar=gy_bar)
        ctx = EkContext(x_k=x, y_k=y, grad_y_at_k=gy_bar, alpha_k=alpha_k, beta_k=beta_k,
                        tau_k=tau, sigma_k=sigma, theta_k=state.theta)
        ek, gy_next, slack = _ek_parts(oracle, ctx, x_next, y_next, a_next, b_next, tilde)
        bound = -params.delta * (oracle.geom_x.distance(x_next, x) / tau
                                 + oracle.geom_y.distance(y_next, y) / sigma)
        # near convergence E_k is dominated by roundoff; allow for it
        if ek <= bound + slack or _negligible_move(x_next, x, y_next, y):
            return BacktrackResult(x_next, y_next, tau, sigma, state.theta, inner,
                                   ek, bound, gy_bar, gy_next)
        if not np.isfinite(ek):
            break
        tau *= params.eta
    raise BacktrackFailure(
        f"step test still failing after {params.max_inner} trials "
        f"(last E_k={ek:.3e}, bound={bound:.3e}, tau={tau:.3e})",
        last_ek=ek, last_bound=bound, last_tau=tau)


def switched_step(oracle, x, y, x_prev, y_prev, tau, sigma, theta,
                  grad_x_prev=None, grad_x_bar=None):
    """x-first step: primal prox on the extrapolated x-gradient, then a dual
    prox using the y-gradient at the new primal point and the old dual one.

    Returns ``(x_next, y_next, grad_x(x, y))``.
    """
    gx_bar = oracle.grad_x(x, y) if grad_x_bar is None else grad_x_bar
    gx_p = oracle.grad_x(x_prev, y_prev) if grad_x_prev is None else grad_x_prev
    s = gx_bar + theta * (gx_bar - gx_p)
    x_next = oracle.prox_f(x, s, tau)
    y_next = oracle.prox_h(y, oracle.grad_y(x_next, y), sigma)
    return x_next, y_next, gx_bar


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------

def _next_tau(params, tau_k, tau_prev, gamma_k, gamma_next):
    if params.tau_max is not None:
        return nonmonotone_tau_next(tau_k, tau_prev, gamma_k, gamma_next, params.tau_max)
    return tau_k * math.sqrt(gamma_k / gamma_next)


def _prepare(oracle, config, algorithm):
    cfg = replace(config, algorithm=algorithm).resolve(oracle)
    return cfg, BacktrackParams.from_config(cfg)


def run_apdb(oracle: SaddleOracle, config: SolverConfig, x0, y0, reference=None,
             monitor: Optional[Callable] = None, callback: Optional[Callable] = None):
    """APD with backtracking; no Lipschitz constants needed.

    Same stopping rules and hooks as :func:`saddlepd.engine.run_apd`. Ergodic
    weights are ``t_k = sigma_k / sigma_0`` with ``sigma_0`` the accepted
    first dual step.
    """
    cfg, params = _prepare(oracle, config, "apdb")
    counted = CountingOracle(oracle)
    x = as_vector(x0, "x0").copy()
    y = as_vector(y0, "y0").copy()
    tracker = RunTracker(oracle, counted, cfg, x, y, reference, monitor, callback)

    def fresh():
        sigma_m1 = params.gamma0 * params.tau_bar
        st = StepState(k=0, tau=params.tau_bar, gamma=params.gamma0,
                       sigma_prev=sigma_m1, sigma0=sigma_m1)
        return st, params.c_alpha / sigma_m1, params.c_beta / sigma_m1, params.tau_bar

    state, alpha_k, beta_k, tau_prev = fresh()
    x_prev, y_prev = x, y
    grad_y_prev = counted.grad_y(x, y)
    grad_y_bar = grad_y_prev
    restarted = False
    for k in range(cfg.max_outer):
        state.k = k
        try:
            res = backtrack_outer_step(counted, state, params, x, y, x_prev, y_prev,
                                       grad_y_prev, alpha_k, beta_k, grad_y_bar=grad_y_bar)
        except BacktrackFailure as exc:
            tracker.fail(str(exc), k, state, params.max_inner, exc.last_ek, exc.last_bound)
            break
        stop = tracker.step(k, x, y, res.x_next, res.y_next, state,
                            inner_steps=res.inner_count, ek=res.ek, ek_bound=res.ek_bound,
                            restarted=restarted)
        restarted = False
        state.sigma0 = tracker.sigma0
        x_prev, y_prev, grad_y_prev = x, y, res.grad_at_k
        x, y, grad_y_bar = res.x_next, res.y_next, res.grad_at_next
        if stop:
            break
        if cfg.restart_period and (k + 1) % cfg.restart_period == 0:
            tracker.reset_epoch(x, y)
            state, alpha_k, beta_k, tau_prev = fresh()
            x_prev, y_prev, grad_y_prev = x, y, grad_y_bar
            restarted = True
            continue
        alpha_k, beta_k = params.c_alpha / res.sigma, params.c_beta / res.sigma
        gamma_next = state.gamma * (1.0 + params.mu * res.tau)
        tau_next = _next_tau(params, res.tau, tau_prev, state.gamma, gamma_next)
        tau_prev = res.tau
        state.sigma_prev = res.sigma
        state.gamma = gamma_next
        state.set_tau(tau_next)
    return tracker.report(x, y, params.gamma0)


def run_apdb_switched(oracle: SaddleOracle, config: SolverConfig, x0, y0, reference=None,
                      monitor: Optional[Callable] = None,
                      callback: Optional[Callable] = None):
    """Backtracking APD with x-first updates, for conic problems posed with
    an unbounded dual cone (no dual bound, no global ``L_xx``).

    Uses ``alpha_{k+1} = c_alpha / tau_k`` and
    ``beta_{k+1} = gamma0 c_beta / sigma_k``.
    """
    cfg, params = _prepare(oracle, config, "apdb_switched")
    counted = CountingOracle(oracle)
    x = as_vector(x0, "x0").copy()
    y = as_vector(y0, "y0").copy()
    tracker = RunTracker(oracle, counted, cfg, x, y, reference, monitor, callback)
    g0 = params.gamma0

    def fresh():
        sigma_m1 = g0 * params.tau_bar
        st = StepState(k=0, tau=params.tau_bar, gamma=g0, sigma_prev=sigma_m1,
                       sigma0=sigma_m1)
        return st, params.c_alpha / params.tau_bar, g0 * params.c_beta / sigma_m1, params.tau_bar

    state, alpha_k, beta_k, tau_prev = fresh()
    x_prev, y_prev = x, y
    grad_x_prev = counted.grad_x(x, y)
    grad_x_bar = grad_x_prev
    restarted = False
    for k in range(cfg.max_outer):
        state.k = k
        tau = state.tau
        accepted = None
        for inner in range(1, params.max_inner + 1):
            state.set_tau(tau)
            sigma = state.sigma
            a_next = params.c_alpha / tau
            b_next = g0 * params.c_beta / sigma
            x_next, y_next, grad_x_bar = switched_step(
                counted, x, y, x_prev, y_prev, tau, sigma, state.theta,
                grad_x_prev=grad_x_prev, grad_x_bar=grad_x_bar)
            ctx = EkContext(x_k=x, y_k=y, grad_y_at_k=None, alpha_k=alpha_k, beta_k=beta_k,
                            tau_k=tau, sigma_k=sigma, theta_k=state.theta)
            ek, gx_next, slack = _ek_switched_parts(counted, ctx, x_next, y_next,
                                                    a_next, b_next, grad_x_bar)
            bound = -params.delta * (oracle.geom_x.distance(x_next, x) / tau
                                     + oracle.geom_y.distance(y_next, y) / sigma)
            if ek <= bound + slack or _negligible_move(x_next, x, y_next, y):
                accepted = (x_next, y_next, inner, ek, bound, gx_next)
                break
            if not np.isfinite(ek):
                break
            tau *= params.eta
        if accepted is None:
            tracker.fail(f"step test still failing after {params.max_inner} trials "
                         f"at k={k} (last E_k={ek:.3e}, bound={bound:.3e})",
                         k, state, params.max_inner, ek, bound)
            break
        x_next, y_next, inner, ek, bound, gx_next = accepted
        stop = tracker.step(k, x, y, x_next, y_next, state, inner_steps=inner, ek=ek,
                            ek_bound=bound, restarted=restarted)
        restarted = False
        state.sigma0 = tracker.sigma0
        x_prev, y_prev, grad_x_prev = x, y, grad_x_bar
        x, y, grad_x_bar = x_next, y_next, gx_next
        if stop:
            break
        if cfg.restart_period and (k + 1) % cfg.restart_period == 0:
            tracker.reset_epoch(x, y)
            state, alpha_k, beta_k, tau_prev = fresh()
            x_prev, y_prev, grad_x_prev = x, y, grad_x_bar
            restarted = True
            continue
        alpha_k, beta_k = params.c_alpha / state.tau, g0 * params.c_beta / state.sigma
        gamma_next = state.gamma * (1.0 + params.mu * state.tau)
        tau_next = _next_tau(params, state.tau, tau_prev, state.gamma, gamma_next)
        tau_prev = state.tau
        state.sigma_prev = state.sigma
        state.gamma = gamma_next
        state.set_tau(tau_next)
    return tracker.report(x, y, g0)

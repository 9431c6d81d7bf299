"""Generic primal-dual iteration, the APD step-size schedule and the APD loop."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import LipschitzTriple, SaddleOracle, as_vector

__all__ = [
    "ALGORITHMS",
    "EvalCounter",
    "CountingOracle",
    "StepState",
    "SolverConfig",
    "IterationRecord",
    "SolveReport",
    "main_step",
    "apd_schedule_next",
    "check_initial_stepsizes",
    "recipe_stepsizes",
    "ergodic_update",
    "gap",
    "delta_value",
    "run_apd",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("apd", "apdb", "apdb_switched")
EK_VARIANTS = ("exact", "tilde")


# ---------------------------------------------------------------------------
# Evaluation accounting
# ---------------------------------------------------------------------------

@dataclass
class EvalCounter:
    grad_x: int = 0
    grad_y: int = 0
    phi: int = 0
    prox_f: int = 0
    prox_h: int = 0

    @property
    def grads(self):
        return self.grad_x + self.grad_y

    def as_dict(self):
        return {"grad_x": self.grad_x, "grad_y": self.grad_y, "phi": self.phi,
                "prox_f": self.prox_f, "prox_h": self.prox_h}


class CountingOracle:
    """Thin proxy around a :class:`SaddleOracle` that counts every call."""

    def __init__(self, oracle: SaddleOracle, counter: Optional[EvalCounter] = None):
        self.base = oracle
        self.counter = counter if counter is not None else EvalCounter()

    def __getattr__(self, name):
        return getattr(self.base, name)

    def phi(self, x, y):
        self.counter.phi += 1
        return self.base.phi(x, y)

    def grad_x(self, x, y):
        self.counter.grad_x += 1
        return np.asarray(self.base.grad_x(x, y), dtype=float)

    def grad_y(self, x, y):
        self.counter.grad_y += 1
        return np.asarray(self.base.grad_y(x, y), dtype=float)

    def prox_f(self, xbar, g, tau):
        self.counter.prox_f += 1
        return np.asarray(self.base.prox_f(xbar, g, tau), dtype=float)

    def prox_h(self, ybar, s, sigma):
        self.counter.prox_h += 1
        return np.asarray(self.base.prox_h(ybar, s, sigma), dtype=float)


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

@dataclass
class StepState:
    """Live step-size schedule of one run.

    ``sigma = gamma * tau``, ``theta = sigma_prev / sigma`` and
    ``t = sigma / sigma0`` are kept consistent by :meth:`set_tau`.
    """

    k: int
    tau: float
    gamma: float
    sigma_prev: float
    sigma0: float
    T: float = 0.0
    prev_grad_y: Optional[np.ndarray] = None
    sigma: float = field(init=False)
    theta: float = field(init=False)
    t: float = field(init=False)

    def __post_init__(self):
        self.set_tau(self.tau)

    def set_tau(self, tau):
        self.tau = float(tau)
        self.sigma = self.gamma * self.tau
        self.theta = self.sigma_prev / self.sigma
        self.t = self.sigma / self.sigma0


@dataclass
class SolverConfig:
    """Algorithm selection and tunables.

    Unset coefficients (``None``) are filled by :meth:`resolve` from the
    problem: ``mu`` from the oracle, ``c_alpha``/``c_beta`` from whether the
    coupling is affine in y, and APD step sizes from the Lipschitz constants.
    """

    algorithm: str = "apd"
    mu: Optional[float] = None
    tau0: Optional[float] = None
    sigma0: Optional[float] = None
    tau_bar: float = 1.0
    gamma0: float = 1.0
    delta: float = 1e-3
    c_alpha: Optional[float] = None
    c_beta: Optional[float] = None
    eta: float = 0.7
    tau_max: Optional[float] = None
    max_outer: int = 10_000
    max_inner: int = 60
    max_grad_evals: Optional[int] = None
    tol: float = 0.0
    restart_period: Optional[int] = None
    ek_variant: str = "exact"
    recipe_alpha: float = 1.0

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.ek_variant not in EK_VARIANTS:
            raise ValueError(f"ek_variant must be one of {EK_VARIANTS}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        for name in ("tau_bar", "gamma0", "recipe_alpha"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau0", "sigma0", "tau_max"):
            val = getattr(self, name)
            if val is not None and not val > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.mu is not None and self.mu < 0.0:
            raise ValueError("mu must be nonnegative")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("max_outer and max_inner must be positive")
        if self.restart_period is not None and self.restart_period < 1:
            raise ValueError("restart_period must be a positive integer")
        if self.tol < 0.0:
            raise ValueError("tol must be nonnegative")
        if self.c_alpha is not None and self.c_beta is not None:
            _check_coefficients(self.c_alpha, self.c_beta, self.delta, lyy_zero=None)

    def resolve(self, oracle: SaddleOracle) -> "SolverConfig":
        """Return a copy with every ``None`` default filled in for ``oracle``."""
        self.validate()
        cfg = replace(self)
        if cfg.mu is None:
            cfg.mu = oracle.mu
        if cfg.mu > 0.0 and oracle.geom_x.kind != "euclidean":
            raise ValueError("mu > 0 requires the Euclidean primal geometry")
        lyy_zero = oracle.lyy_zero
        if cfg.algorithm == "apd":
            if oracle.lipschitz is None:
                raise ValueError(
                    "APD needs Lipschitz constants for its step sizes; "
                    "use algorithm='apdb' (backtracking) instead")
            if cfg.tau0 is None or cfg.sigma0 is None or cfg.c_alpha is None:
                tau0, sigma0, ca, cb = recipe_stepsizes(
                    oracle.lipschitz, alpha=cfg.recipe_alpha, delta=cfg.delta)
                cfg.tau0 = cfg.tau0 if cfg.tau0 is not None else tau0
                cfg.sigma0 = cfg.sigma0 if cfg.sigma0 is not None else sigma0
                if cfg.c_alpha is None:
                    cfg.c_alpha, cfg.c_beta = ca, cb
            if cfg.c_beta is None:
                cfg.c_beta = 0.0 if lyy_zero else 0.5 * (1.0 - cfg.delta - cfg.c_alpha)
        elif cfg.algorithm == "apdb":
            if cfg.c_alpha is None:
                cfg.c_alpha = 0.999 - cfg.delta if lyy_zero else 0.49
            if cfg.c_beta is None:
                cfg.c_beta = 0.0 if lyy_zero else 0.49
        else:
            # Switched updates always carry a beta term (the x-gradient drift).
            # c_alpha only meets the y-Lipschitz constant of grad_x, which is
            # small for conic problems, so most of the budget goes to c_beta.
            if cfg.c_alpha is None:
                cfg.c_alpha = 0.2
            if cfg.c_beta is None:
                cfg.c_beta = 0.5 * (1.0 - cfg.delta - cfg.c_alpha)
        if cfg.algorithm == "apdb_switched":
            _check_coefficients(cfg.c_alpha, cfg.c_beta, cfg.delta, lyy_zero=None)
            if cfg.c_beta <= 0.0:
                raise ValueError("switched APDB needs c_beta > 0")
        else:
            _check_coefficients(cfg.c_alpha, cfg.c_beta, cfg.delta, lyy_zero=lyy_zero)
        return cfg


def _check_coefficients(c_alpha, c_beta, delta, lyy_zero):
    if c_alpha <= 0.0:
        raise ValueError("step-size coefficients violate c_alpha > 0")
    if c_beta < 0.0:
        raise ValueError("step-size coefficients violate c_beta >= 0")
    if c_alpha + c_beta + delta > 1.0 + 1e-12:
        raise ValueError(
            f"step-size coefficients violate c_alpha + c_beta + delta <= 1 "
            f"(got {c_alpha} + {c_beta} + {delta} = {c_alpha + c_beta + delta})")
    if lyy_zero is True and c_beta != 0.0:
        raise ValueError("coupling is affine in y (L_yy = 0): c_beta must be 0")
    if lyy_zero is False and c_beta <= 0.0:
        raise ValueError("coupling has L_yy > 0: c_beta must be positive")


@dataclass
class IterationRecord:
    k: int
    tau: float
    sigma: float
    theta: float
    gamma: float
    T: float
    inner_steps: int = 0
    ek: Optional[float] = None
    ek_bound: Optional[float] = None
    gap: Optional[float] = None
    subopt: Optional[float] = None
    infeas: Optional[float] = None
    elapsed: float = 0.0
    grad_x_evals: int = 0
    grad_y_evals: int = 0
    restarted: bool = False


@dataclass
class SolveReport:
    x_final: np.ndarray
    y_final: np.ndarray
    x_ergodic: np.ndarray
    y_ergodic: np.ndarray
    records: list
    status: str
    counters: EvalCounter
    tau0: float
    sigma0: float
    gamma0: float
    x0: np.ndarray
    y0: np.ndarray
    config: SolverConfig
    message: str = ""

    @property
    def iterations(self):
        return len(self.records)

    @property
    def T(self):
        return self.records[-1].T if self.records else 0.0

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def main_step(oracle, xbar, ybar, x_p, y_p, tau, sigma, theta,
              grad_y_prev=None, grad_y_bar=None):
    """One primal-dual step: dual prox on the extrapolated y-gradient, then a
    primal prox using the x-gradient at the new dual point.

    Returns ``(x_hat, y_hat, grad_y(xbar, ybar))``. Pass ``grad_y_prev``
    (the y-gradient at ``(x_p, y_p)``) and/or ``grad_y_bar`` to reuse cached
    values.
    """
    gy_bar = oracle.grad_y(xbar, ybar) if grad_y_bar is None else grad_y_bar
    gy_p = oracle.grad_y(x_p, y_p) if grad_y_prev is None else grad_y_prev
    # same as (1+theta) gy_bar - theta gy_p, but exact when the two agree
    s = gy_bar + theta * (gy_bar - gy_p)
    y_hat = oracle.prox_h(ybar, s, sigma)
    x_hat = oracle.prox_f(xbar, oracle.grad_x(xbar, y_hat), tau)
    return x_hat, y_hat, gy_bar


def apd_schedule_next(gamma, tau, mu):
    """``gamma <- gamma (1 + mu tau)``, ``tau <- tau sqrt(gamma_old / gamma)``."""
    gamma_next = gamma * (1.0 + mu * tau)
    tau_next = tau * math.sqrt(gamma / gamma_next)
    return gamma_next, tau_next


def check_initial_stepsizes(lip: LipschitzTriple, delta, c_alpha, c_beta, tau0, sigma0,
                            rtol=1e-12):
    """Admissibility of ``(tau0, sigma0)`` for constant/accelerated APD steps.

    Checks ``((1-delta)/tau0 - L_xx)/sigma0 >= L_yx^2/c_alpha`` and
    ``1 - (delta + c_alpha + c_beta) >= L_yy^2 sigma0^2 / c_beta`` with
    ``0^2/0 = 0``. ``rtol`` absorbs round-off when a recipe hits equality.
    """
    # rearranged as (1-delta)/tau0 >= L_xx + sigma0 L_yx^2/c_alpha to avoid
    # cancellation when L_xx dominates
    lhs1 = (1.0 - delta) / tau0
    rhs1 = lip.L_xx + sigma0 * lip.L_yx ** 2 / c_alpha
    ok1 = lhs1 >= rhs1 * (1.0 - rtol)
    lhs2 = 1.0 - (delta + c_alpha + c_beta)
    if lip.L_yy == 0.0:
        rhs2 = 0.0
    elif c_beta == 0.0:
        return False
    else:
        rhs2 = lip.L_yy ** 2 * sigma0 ** 2 / c_beta
    ok2 = lhs2 >= rhs2 - rtol * max(1.0, rhs2)
    return bool(ok1 and ok2)


def recipe_stepsizes(lip: LipschitzTriple, alpha=1.0, delta=0.0):
    """Default admissible ``(tau0, sigma0, c_alpha, c_beta)``.

    ``tau0 = (1-delta)/(L_xx + L_yx^2/alpha)`` and
    ``sigma0 = (1-delta)/(alpha + 2 L_yy)``; with ``delta = 0`` these are the
    largest steps of the classic recipe. The coefficients make both initial
    step conditions hold with equality.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    scale = 1.0 - delta
    tau0 = scale / (lip.L_xx + lip.L_yx ** 2 / alpha)
    sigma0 = scale / (alpha + 2.0 * lip.L_yy)
    c_alpha = scale * alpha / (alpha + 2.0 * lip.L_yy)
    c_beta = scale * lip.L_yy / (alpha + 2.0 * lip.L_yy)
    return tau0, sigma0, c_alpha, c_beta


def ergodic_update(avg, T, x_next, t):
    """Running weighted mean: returns ``((T avg + t x)/(T + t), T + t)``."""
    x_next = np.asarray(x_next, dtype=float)
    if T <= 0.0 or avg is None:
        return x_next.copy(), float(t)
    T_new = T + t
    return avg + (t / T_new) * (x_next - avg), T_new


def gap(oracle: SaddleOracle, xbar, ybar, x_ref, y_ref):
    """``L(xbar, y_ref) - L(x_ref, ybar)``; ``inf`` if any point is infeasible."""
    fx = oracle.f_value(xbar)
    fr = oracle.f_value(x_ref)
    hy = oracle.h_value(ybar)
    hr = oracle.h_value(y_ref)
    if not all(math.isfinite(v) for v in (fx, fr, hy, hr)):
        return math.inf
    return (fx + oracle.phi(xbar, y_ref) - hr) - (fr + oracle.phi(x_ref, ybar) - hy)


def delta_value(oracle: SaddleOracle, x, y, x0, y0, tau0, sigma0):
    """``D_X(x, x0)/tau0 + D_Y(y, y0)/sigma0``: the numerator of the ergodic bound."""
    return (oracle.geom_x.distance(x, x0) / tau0
            + oracle.geom_y.distance(y, y0) / sigma0)


# ---------------------------------------------------------------------------
# Run bookkeeping shared by every solver loop
# ---------------------------------------------------------------------------

class RunTracker:
    """Ergodic averages, per-iteration records, monitors and stopping rules."""

    def __init__(self, oracle, counted, config, x0, y0, reference, monitor, callback):
        self.oracle = oracle
        self.counted = counted
        self.config = config
        self.reference = None
        if reference is not None:
            self.reference = (as_vector(reference[0], "x_ref"), as_vector(reference[1], "y_ref"))
        self.monitor = monitor
        self.callback = callback
        self.records = []
        self.start = time.perf_counter()
        self.status = "budget_exhausted"
        self.message = ""
        self.reset_epoch(x0, y0)

    def reset_epoch(self, x0, y0):
        self.x0 = np.array(x0, dtype=float)
        self.y0 = np.array(y0, dtype=float)
        self.x_avg = None
        self.y_avg = None
        self.T = 0.0
        self.tau0 = None
        self.sigma0 = None

    def step(self, k, x, y, x_next, y_next, state: StepState, inner_steps=0,
             ek=None, ek_bound=None, restarted=False):
        """Fold one accepted iterate in; return True when the run should stop."""
        if self.tau0 is None:
            self.tau0, self.sigma0 = state.tau, state.sigma
        # a sum is finite only if every entry is
        if not (math.isfinite(float(np.sum(x_next))) and math.isfinite(float(np.sum(y_next)))):
            self.status = "diverged"
            self.message = f"non-finite iterate at k={k}"
            self.records.append(self._record(k, state, inner_steps, ek, ek_bound, restarted))
            return True
        t = state.sigma / self.sigma0
        self.x_avg, T_new = ergodic_update(self.x_avg, self.T, x_next, t)
        self.y_avg, _ = ergodic_update(self.y_avg, self.T, y_next, t)
        self.T = T_new
        cnt = self.counted.counter
        rec = self._record(k, state, inner_steps, ek, ek_bound, restarted)
        stop_value = None
        if self.reference is not None:
            rec.gap = gap(self.oracle, self.x_avg, self.y_avg, *self.reference)
            stop_value = rec.gap
        if self.monitor is not None:
            info = self.monitor(x_next, y_next, self.x_avg, self.y_avg) or {}
            rec.subopt = info.get("subopt")
            rec.infeas = info.get("infeas")
            if "gap" in info:
                rec.gap = info["gap"]
            if info.get("stop") is not None:
                stop_value = info["stop"]
        if stop_value is None:
            dz = math.sqrt(float(np.sum((x_next - x) ** 2) + np.sum((y_next - y) ** 2)))
            zn = math.sqrt(float(x @ x) + float(y @ y))
            stop_value = dz / max(1.0, zn)
        self.records.append(rec)
        if self.callback is not None:
            self.callback(dict(k=k, x=x, y=y, x_next=x_next, y_next=y_next,
                               x_avg=self.x_avg, y_avg=self.y_avg, T=self.T,
                               state=state, record=rec, x0=self.x0, y0=self.y0,
                               tau0=self.tau0, sigma0=self.sigma0))
        cfg = self.config
        if cfg.tol > 0.0 and stop_value is not None and stop_value <= cfg.tol:
            self.status = "converged"
            return True
        if cfg.max_grad_evals is not None and cnt.grads >= cfg.max_grad_evals:
            self.status = "budget_exhausted"
            return True
        return False

    def _record(self, k, state, inner_steps, ek, ek_bound, restarted):
        cnt = self.counted.counter
        return IterationRecord(
            k=k, tau=state.tau, sigma=state.sigma, theta=state.theta,
            gamma=state.gamma, T=self.T, inner_steps=inner_steps, ek=ek,
            ek_bound=ek_bound, elapsed=time.perf_counter() - self.start,
            grad_x_evals=cnt.grad_x, grad_y_evals=cnt.grad_y, restarted=restarted)

    def fail(self, message, k=None, state=None, inner_steps=0, ek=None, ek_bound=None):
        """Mark the run diverged; with ``state`` also log the failed iteration."""
        self.status = "diverged"
        self.message = message
        if state is not None:
            if self.tau0 is None:
                self.tau0, self.sigma0 = state.tau, state.sigma
            self.records.append(self._record(k, state, inner_steps, ek, ek_bound, False))

    def report(self, x, y, gamma0):
        x_avg = self.x_avg if self.x_avg is not None else np.array(x)
        y_avg = self.y_avg if self.y_avg is not None else np.array(y)
        if not self.records:
            raise RuntimeError("solver produced no iterations")
        return SolveReport(
            x_final=np.array(x), y_final=np.array(y), x_ergodic=np.array(x_avg),
            y_ergodic=np.array(y_avg), records=self.records, status=self.status,
            counters=self.counted.counter, tau0=self.tau0, sigma0=self.sigma0,
            gamma0=gamma0, x0=self.x0, y0=self.y0, config=self.config,
            message=self.message)


# ---------------------------------------------------------------------------
# APD
# ---------------------------------------------------------------------------

def run_apd(oracle: SaddleOracle, config: SolverConfig, x0, y0, reference=None,
            monitor: Optional[Callable] = None, callback: Optional[Callable] = None):
    """Accelerated primal-dual method with known Lipschitz constants.

    Constant steps when ``mu = 0``; the accelerated schedule
    ``gamma_{k+1} = gamma_k (1 + mu tau_k)`` otherwise. Ergodic weights are
    ``t_k = sigma_k / sigma_0``.

    Parameters
    ----------
    reference : (x_ref, y_ref), optional
        Point at which the ergodic gap is logged; also the stopping metric.
    monitor : callable, optional
        ``monitor(x, y, x_avg, y_avg) -> dict`` with optional keys
        ``subopt``, ``infeas``, ``gap`` and ``stop``. A ``stop`` value takes
        precedence over the reference gap for termination.
    callback : callable, optional
        Called with a dict of the iteration state after every step.
    """
    cfg = config.resolve(oracle)
    if cfg.algorithm != "apd":
        cfg = replace(cfg, algorithm="apd")
    if not check_initial_stepsizes(oracle.lipschitz, cfg.delta, cfg.c_alpha, cfg.c_beta,
                                   cfg.tau0, cfg.sigma0):
        warnings.warn("initial step sizes violate the admissibility conditions; "
                      "convergence guarantees do not apply", RuntimeWarning, stacklevel=2)
    counted = CountingOracle(oracle)
    x = as_vector(x0, "x0").copy()
    y = as_vector(y0, "y0").copy()
    tracker = RunTracker(oracle, counted, cfg, x, y, reference, monitor, callback)
    gamma0 = cfg.sigma0 / cfg.tau0

    def fresh_state(k):
        return StepState(k=k, tau=cfg.tau0, gamma=gamma0, sigma_prev=cfg.sigma0,
                         sigma0=cfg.sigma0)

    state = fresh_state(0)
    x_prev, y_prev = x, y
    grad_y_prev = counted.grad_y(x_prev, y_prev)
    restarted = False
    for k in range(cfg.max_outer):
        state.k = k
        x_next, y_next, gy = main_step(counted, x, y, x_prev, y_prev, state.tau,
                                       state.sigma, state.theta, grad_y_prev=grad_y_prev)
        stop = tracker.step(k, x, y, x_next, y_next, state, restarted=restarted)
        restarted = False
        x_prev, y_prev, grad_y_prev = x, y, gy
        x, y = x_next, y_next
        if stop:
            break
        if cfg.restart_period and (k + 1) % cfg.restart_period == 0:
            tracker.reset_epoch(x, y)
            state = fresh_state(k + 1)
            x_prev, y_prev = x, y
            grad_y_prev = counted.grad_y(x, y)
            restarted = True
            continue
        gamma_next, tau_next = apd_schedule_next(state.gamma, state.tau, cfg.mu)
        sigma_k = state.sigma
        state.gamma = gamma_next
        state.sigma_prev = sigma_k
        state.set_tau(tau_next)
    return tracker.report(x, y, gamma0)

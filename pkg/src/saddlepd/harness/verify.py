"""Independent checks used by the test-suite and the ``verify`` subcommand."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..conic import moreau_residual
from ..engine import apd_schedule_next

__all__ = [
    "finite_diff_check",
    "grid_saddle_oracle",
    "SuiteReport",
    "prox_inequality_suite",
    "projection_suite",
    "moreau_suite",
    "schedule_identity_suite",
    "domain_sampler",
]


def _fd_grad(fun, z, h):
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (fun(z + e) - fun(z - e)) / (2.0 * h)
    return g


def finite_diff_check(oracle, points, h_fd=1e-6):
    """Worst relative error between central differences of ``phi`` and the
    analytic partial gradients over ``points`` (pairs ``(x, y)``).

    Relative error is ``||fd - g|| / max(1, ||g||)`` per block.
    """
    if not 1e-8 <= h_fd <= 1e-4:
        raise ValueError("h_fd must lie in [1e-8, 1e-4]")
    worst = 0.0
    for x, y in points:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = np.asarray(oracle.grad_x(x, y), dtype=float)
        gy = np.asarray(oracle.grad_y(x, y), dtype=float)
        fx = _fd_grad(lambda z: oracle.phi(z, y), x, h_fd)
        fy = _fd_grad(lambda z: oracle.phi(x, z), y, h_fd)
        worst = max(worst,
                    float(np.linalg.norm(fx - gx)) / max(1.0, float(np.linalg.norm(gx))),
                    float(np.linalg.norm(fy - gy)) / max(1.0, float(np.linalg.norm(gy))))
    return worst


def grid_saddle_oracle(lagrangian, bounds, resolution):
    """Brute-force minimax of ``lagrangian(x, y)`` on a tensor grid.

    ``bounds = (x_bounds, y_bounds)``, each a list of ``(lo, hi)`` per
    coordinate; at most three coordinates in total. ``lagrangian`` may be a
    :class:`SaddleOracle` (its ``lagrangian`` method is used).

    Returns ``(x_star, y_star, value)`` with ``x_star`` minimizing the grid
    maximum over y and ``y_star`` maximizing the grid minimum over x.
    """
    L = getattr(lagrangian, "lagrangian", lagrangian)
    xb, yb = bounds
    if len(xb) + len(yb) > 3:
        raise ValueError("grid oracle supports at most 3 coordinates in total")
    axes_x = [np.linspace(lo, hi, resolution) for lo, hi in xb]
    axes_y = [np.linspace(lo, hi, resolution) for lo, hi in yb]
    xs = [np.array(p) for p in itertools.product(*axes_x)]
    ys = [np.array(p) for p in itertools.product(*axes_y)]
    table = np.array([[L(x, y) for y in ys] for x in xs])
    i = int(np.argmin(table.max(axis=1)))
    j = int(np.argmax(table.min(axis=0)))
    return xs[i], ys[j], float(table.max(axis=1)[i])


@dataclass
class SuiteReport:
    name: str
    passed: bool
    worst: float
    failures: int = 0
    samples: int = 0
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "failures": self.failures, "samples": self.samples}


def domain_sampler(prox, dim, geometry="euclidean", scale=3.0):
    """Random points of a prox map's domain: project (prox with zero
    gradient) random vectors; entropy geometries start from a random
    interior simplex point."""
    def sample(rng):
        if geometry == "entropy":
            w = rng.exponential(size=dim) + 1e-3
            return w / w.sum()
        return np.asarray(prox(scale * rng.standard_normal(dim), np.zeros(dim), 1.0), dtype=float)
    return sample


def prox_inequality_suite(oracle, dim_x, dim_y, samples=100, seed=0, slack=1e-9,
                          side="both", name=None):
    """Three-point prox inequality for ``prox_f`` and ``prox_h``.

    For ``x+ = argmin f(x) + <g,x> + t D(x, xbar)`` and any ``x`` in the
    domain: ``f(x) + <g,x> + t D(x,xbar) >= f(x+) + <g,x+> + t D(x+,xbar)
    + t D(x,x+) + (mu/2)||x - x+||^2``. The dual side is the same with
    ``h(y) - <s, y>`` and no modulus. Violations beyond
    ``slack * max(1, |lhs|)`` are counted, not raised.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    total = 0
    sides = ("x", "y") if side == "both" else (side,)
    for s in sides:
        if s == "x":
            geom, prox, val, mu, dim = oracle.geom_x, oracle.prox_f, oracle.f_value, oracle.mu, dim_x
            sign = 1.0
        else:
            geom, prox, val, mu, dim = oracle.geom_y, oracle.prox_h, oracle.h_value, 0.0, dim_y
            sign = -1.0
        sample = domain_sampler(
            (lambda z, g, t, p=prox, sg=sign: p(z, sg * g, t)) if geom.kind == "euclidean"
            else prox, dim, geom.kind)
        for _ in range(samples):
            xbar = sample(rng)
            x = sample(rng)
            g = rng.standard_normal(dim)
            tau = float(np.exp(rng.uniform(-3, 1)))
            t = 1.0 / tau
            xp = np.asarray(prox(xbar, g, tau), dtype=float)
            lin = sign * g   # objective is val(z) + <lin, z>
            lhs = val(x) + float(lin @ x) + t * geom.distance(x, xbar)
            rhs = (val(xp) + float(lin @ xp) + t * geom.distance(xp, xbar)
                   + t * geom.distance(x, xp) + 0.5 * mu * float(np.sum((x - xp) ** 2)))
            viol = (rhs - lhs) / max(1.0, abs(lhs))
            worst = max(worst, viol)
            total += 1
            if not math.isfinite(lhs) or not math.isfinite(rhs) or viol > slack:
                failures += 1
    name = name or f"prox_inequality[{oracle.name}]"
    return SuiteReport(name, failures == 0, worst, failures, total)


def projection_suite(project, sampler, samples=100, seed=0, tol=1e-12, name="projection"):
    """Idempotence and nonexpansiveness of a projection on random inputs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for _ in range(samples):
        u, v = sampler(rng), sampler(rng)
        pu, pv = project(u), project(v)
        idem = float(np.max(np.abs(project(pu) - pu))) / max(1.0, float(np.max(np.abs(pu))))
        expand = float(np.linalg.norm(pu - pv)) - float(np.linalg.norm(u - v))
        bad = max(idem, expand)
        worst = max(worst, bad)
        failures += bad > tol
    return SuiteReport(name, failures == 0, worst, failures, samples)


def moreau_suite(cone, dim, samples=100, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        w = 3.0 * rng.standard_normal(dim)
        res, orth = moreau_residual(w, cone)
        worst = max(worst, res, orth)
    return SuiteReport(f"moreau[{cone.kind}]", worst <= tol, worst, int(worst > tol), samples)


def schedule_identity_suite(draws=100, steps=1000, seed=0, tol=1e-12):
    """Recursive APD schedule against its closed form.

    For each random ``(mu, tau0, gamma0)`` checks, at every step,
    ``theta_{k+1} sqrt(1 + mu tau_k) = 1``, ``tau_{k+1} = theta_{k+1} tau_k``
    and ``sigma_{k+1} theta_{k+1} = sigma_k`` in relative terms.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        mu = rng.uniform(0.0, 10.0)
        tau = rng.uniform(1e-3, 1.0)
        gamma = math.exp(rng.uniform(math.log(1e-2), math.log(1e2)))
        sigma = gamma * tau
        for _ in range(steps):
            gamma_n, tau_n = apd_schedule_next(gamma, tau, mu)
            sigma_n = gamma_n * tau_n
            theta_n = sigma / sigma_n
            worst = max(worst,
                        abs(theta_n * math.sqrt(1.0 + mu * tau) - 1.0),
                        abs(tau_n - theta_n * tau) / tau,
                        abs(sigma_n * theta_n - sigma) / sigma)
            gamma, tau, sigma = gamma_n, tau_n, sigma_n
    return SuiteReport("schedule_identity", worst <= tol, worst, int(worst > tol), draws * steps)

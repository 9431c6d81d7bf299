import math

import numpy as np
import pytest
import sympy as sp

import saddlepd.backtracking as bt
from saddlepd.backtracking import (BacktrackParams, EkContext, backtrack_outer_step,
                                   inner_iteration_cap, nonmonotone_tau_next, psi_bounds,
                                   run_apdb, run_apdb_switched, switched_step, tau_hat,
                                   test_function_ek as ek_exact,
                                   test_function_ek_tilde as ek_tilde)
from saddlepd.conic import ConicProblem, build_saddle_from_conic, nonneg_orthant
from saddlepd.core import (EUCLIDEAN, LipschitzTriple, SaddleOracle, project_box,
                           project_orthant_ball)
from saddlepd.engine import SolverConfig, StepState, delta_value, gap
from saddlepd.problems import (RPS, bilinear_box_problem, gen_qcqp, matrix_game,
                               qcqp_dual_bound, qcqp_to_conic)


def half_x2_y_oracle():
    """phi(x, y) = x^2 y / 2 on R x R_+."""
    return SaddleOracle(
        phi=lambda x, y: float(0.5 * x[0] ** 2 * y[0]),
        grad_x=lambda x, y: np.array([x[0] * y[0]]),
        grad_y=lambda x, y: np.array([0.5 * x[0] ** 2]),
        prox_f=lambda xb, g, t: np.asarray(xb) - t * np.asarray(g),
        prox_h=lambda yb, s, t: np.maximum(np.asarray(yb) + t * np.asarray(s), 0.0))


def ctx_for(oracle, xk, yk, tau, sigma, theta, alpha_k, beta_k):
    return EkContext(x_k=np.asarray(xk, float), y_k=np.asarray(yk, float),
                     grad_y_at_k=np.asarray(oracle.grad_y(xk, yk), float),
                     alpha_k=alpha_k, beta_k=beta_k, tau_k=tau, sigma_k=sigma, theta_k=theta)


def strip_lipschitz(o):
    return SaddleOracle(phi=o.phi, grad_x=o.grad_x, grad_y=o.grad_y, prox_f=o.prox_f,
                        prox_h=o.prox_h, geom_x=o.geom_x, geom_y=o.geom_y, mu=o.mu,
                        f_value=o.f_value, h_value=o.h_value, affine_in_y=o.affine_in_y)


def bounded_qcqp(n, m, seed, strongly_convex=False):
    inst = gen_qcqp(n, m, seed, strongly_convex=strongly_convex)
    conic = qcqp_to_conic(inst)
    B, _, _ = qcqp_dual_bound(inst, conic)
    return build_saddle_from_conic(conic, dual_bound=B), inst


# -- step test ---------------------------------------------------------------

def test_ek_bilinear_hand_example():
    o = bilinear_box_problem(np.array([[1.0]]), radius=10.0)
    ctx = ctx_for(o, [0.0], [0.0], tau=1.0, sigma=1.0, theta=1.0, alpha_k=1.0, beta_k=0.0)
    assert ek_exact(o, ctx, np.array([1.0]), np.array([0.0]), 1.0, 0.0) == 0.0


def test_ek_vanishes_at_current_point():
    o = half_x2_y_oracle()
    ctx = ctx_for(o, [0.7], [1.3], 0.4, 0.2, 0.9, 2.0, 1.0)
    assert ek_exact(o, ctx, np.array([0.7]), np.array([1.3]), 3.0, 1.5) == 0.0


def test_ek_matches_symbolic_expansion():
    x, y, xk, yk, a, b, ak, bk, tau, sig, th = sp.symbols("x y xk yk a b ak bk tau sig th")
    phi = x ** 2 * y / 2
    gx = sp.diff(phi, x)
    gy = sp.diff(phi, y)
    E = (phi - phi.subs(x, xk) - gx.subs(x, xk) * (x - xk)
         + (gy - gy.subs(x, xk)) ** 2 / (2 * a)
         + (gy.subs(x, xk) - gy.subs({x: xk, y: yk})) ** 2 / (2 * b)
         - (x - xk) ** 2 / (2 * tau)
         - (1 / sig - th * (ak + bk)) * (y - yk) ** 2 / 2)
    f = sp.lambdify((x, y, xk, yk, a, b, ak, bk, tau, sig, th), E, "mpmath")
    o = half_x2_y_oracle()
    rng = np.random.default_rng(0)
    for _ in range(50):
        xv, xkv = rng.uniform(-2, 2, 2)
        yv, ykv = rng.uniform(0, 2, 2)
        av, bv, akv, bkv = rng.uniform(0.5, 3, 4)
        tv, sv, thv = rng.uniform(0.1, 1, 3)
        ctx = ctx_for(o, [xkv], [ykv], tv, sv, thv, akv, bkv)
        got = ek_exact(o, ctx, np.array([xv]), np.array([yv]), av, bv)
        want = float(f(xv, yv, xkv, ykv, av, bv, akv, bkv, tv, sv, thv))
        assert got == pytest.approx(want, abs=1e-12)


def test_ek_zero_over_zero_convention():
    o = bilinear_box_problem(np.array([[2.0]]), radius=10.0)
    ctx = ctx_for(o, [0.1], [0.2], 0.5, 0.5, 1.0, 1.0, 0.0)
    # grad_y does not depend on y, so beta = 0 is fine
    ek_exact(o, ctx, np.array([0.3]), np.array([-0.4]), 1.0, 0.0)
    q = half_x2_y_oracle()
    ctx = ctx_for(q, [0.5], [0.2], 0.5, 0.5, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError, match="0\\^2/0"):
        # alpha = 0 while the y-gradient moves with x
        ek_exact(q, ctx, np.array([1.0]), np.array([0.2]), 0.0, 1.0)


def test_ek_tilde_equals_exact_for_bilinear():
    rng = np.random.default_rng(1)
    o = bilinear_box_problem(rng.standard_normal((3, 2)), radius=5.0)
    for _ in range(20):
        xk, x = rng.uniform(-1, 1, (2, 2))
        yk, y = rng.uniform(-1, 1, (2, 3))
        ctx = ctx_for(o, xk, yk, 0.3, 0.2, 1.0, 1.5, 0.0)
        assert ek_tilde(o, ctx, x, y, 2.0, 0.0) == pytest.approx(
            ek_exact(o, ctx, x, y, 2.0, 0.0), abs=1e-13)


def test_ek_tilde_strictly_larger_under_curvature():
    o = half_x2_y_oracle()
    ctx = ctx_for(o, [0.2], [1.0], 0.5, 0.5, 1.0, 1.0, 1.0)
    x, y = np.array([1.2]), np.array([0.8])
    assert ek_tilde(o, ctx, x, y, 1.0, 1.0) > ek_exact(o, ctx, x, y, 1.0, 1.0)


def test_ek_tilde_upper_bounds_exact_on_qcqp():
    o, inst = bounded_qcqp(5, 2, 0)
    R = o.extras["dual_radius"]
    rng = np.random.default_rng(2)
    for _ in range(50):
        xk, x = rng.uniform(-10, 10, (2, 5))
        yk, y = (project_orthant_ball(rng.uniform(0, R, 2), R) for _ in range(2))
        ctx = ctx_for(o, xk, yk, 1e-3, 1e-4, 1.0, 10.0, 0.0)
        assert ek_tilde(o, ctx, x, y, 5.0, 0.0) >= ek_exact(o, ctx, x, y, 5.0, 0.0) - 1e-10


def test_ek_obeys_known_constant_bound():
    o, inst = bounded_qcqp(5, 2, 1)
    lip = o.lipschitz
    R = o.extras["dual_radius"]
    rng = np.random.default_rng(3)
    for _ in range(100):
        xk, x = rng.uniform(-10, 10, (2, 5))
        yk = project_orthant_ball(rng.uniform(0, R, 2), R)
        y = project_orthant_ball(rng.uniform(0, R, 2), R)
        tau, sigma, theta = 10.0 ** rng.uniform(-4, -1, 3)
        a_next, ak = 10.0 ** rng.uniform(-1, 3, 2)
        ctx = ctx_for(o, xk, yk, tau, sigma, theta, ak, 0.0)
        ek = ek_exact(o, ctx, x, y, a_next, 0.0)
        dx = EUCLIDEAN.distance(x, xk)
        dy = EUCLIDEAN.distance(y, yk)
        bound = ((lip.L_yx ** 2 / a_next + lip.L_xx - 1.0 / tau) * dx
                 + (theta * ak - 1.0 / sigma) * dy)
        assert ek <= bound + 1e-9 * max(1.0, abs(bound))


# -- step-size theory --------------------------------------------------------

def test_psi_bounds_example():
    psi1, psi2, zeta, psi = psi_bounds(LipschitzTriple(1.0, 1.0, 0.0), 1.0, 1.0, 0.0, 0.0)
    assert zeta == pytest.approx(-1 + math.sqrt(5), abs=1e-15)
    assert psi1 == pytest.approx((-1 + math.sqrt(5)) / 2, abs=1e-15)
    assert psi2 == math.inf and psi == psi1


def test_psi_ignores_c_beta_when_lyy_zero():
    lip = LipschitzTriple(2.0, 3.0, 0.0)
    assert psi_bounds(lip, 1.5, 0.4, 0.0, 0.1)[3] == psi_bounds(lip, 1.5, 0.4, 0.5, 0.1)[3]


def test_psi1_equals_tau_hat_at_gamma0():
    rng = np.random.default_rng(4)
    for _ in range(100):
        lip = LipschitzTriple(10.0 ** rng.uniform(-3, 3), 10.0 ** rng.uniform(-3, 3), 0.0)
        g0, ca = 10.0 ** rng.uniform(-3, 3), rng.uniform(0.05, 0.9)
        delta = rng.uniform(0, 1 - ca)
        psi1 = psi_bounds(lip, g0, ca, 0.0, delta)[0]
        assert psi1 == pytest.approx(tau_hat(lip, g0, ca, 0.0, delta), rel=1e-10)
    # the L_xx = 0 limit agrees too
    lip = LipschitzTriple(0.0, 2.0, 0.0)
    assert psi_bounds(lip, 1.0, 0.5, 0.0, 0.0)[0] == pytest.approx(
        tau_hat(lip, 1.0, 0.5, 0.0, 0.0), rel=1e-14)


def test_psi_with_lyy_takes_minimum():
    lip = LipschitzTriple(1.0, 1.0, 5.0)
    psi1, psi2, _, psi = psi_bounds(lip, 1.0, 0.4, 0.4, 0.0)
    assert psi2 == pytest.approx(math.sqrt(0.4 * 0.2) / 5.0)
    assert psi == min(psi1, psi2)


def test_inner_iteration_cap_arithmetic():
    assert inner_iteration_cap(1.0, 0.25, 0.5) == 3
    assert inner_iteration_cap(0.1, 0.25, 0.5) == 1


def test_nonmonotone_rule():
    assert nonmonotone_tau_next(0.5, 0.5, 1.0, 1.0, 10.0) == pytest.approx(0.5 * math.sqrt(2))
    assert nonmonotone_tau_next(0.5, 0.5, 1.0, 1.0, 0.6) == 0.6


def test_params_validation():
    with pytest.raises(ValueError):
        BacktrackParams(c_alpha=0.6, c_beta=0.5, delta=0.0)
    with pytest.raises(ValueError):
        BacktrackParams(eta=0.0)
    with pytest.raises(ValueError):
        BacktrackParams(c_alpha=0.0)


# -- one outer step ----------------------------------------------------------

def test_forced_rejection_halves_until_accepted(monkeypatch):
    o = bilinear_box_problem(np.array([[1.0]]))
    real = bt._ek_parts

    def forced(oracle, ctx, *args, **kw):
        val, g, slack = real(oracle, ctx, *args, **kw)
        return (1.0 if ctx.tau_k > 0.1 else val), g, slack

    monkeypatch.setattr(bt, "_ek_parts", forced)
    params = BacktrackParams(delta=0.0, c_alpha=1.0, eta=0.5, tau_bar=1.0)
    st = StepState(k=0, tau=1.0, gamma=1.0, sigma_prev=1.0, sigma0=1.0)
    x, y = np.array([0.5]), np.array([0.5])
    res = backtrack_outer_step(o, st, params, x, y, x, y, o.grad_y(x, y), 1.0, 0.0)
    assert 0.05 <= res.tau <= 0.1 and res.inner_count == 5
    assert st.tau == res.tau and st.sigma == res.sigma


def test_max_inner_exhaustion_reports_divergence(monkeypatch):
    o = bilinear_box_problem(np.array([[1.0]]))
    real = bt._ek_parts
    monkeypatch.setattr(bt, "_ek_parts",
                        lambda *a, **k: (1.0,) + tuple(real(*a, **k)[1:]))
    rep = run_apdb(o, SolverConfig(max_inner=4), [0.5], [0.5])
    assert rep.status == "diverged" and "E_k" in rep.message


def test_first_trial_accepted_below_tau_hat():
    o, _ = bounded_qcqp(6, 2, 0)
    cfg = SolverConfig(algorithm="apdb", max_outer=300, gamma0=1e-2)
    res = cfg.resolve(o)
    th = tau_hat(o.lipschitz, res.gamma0, res.c_alpha, res.c_beta, res.delta)
    rep = run_apdb(o, SolverConfig(algorithm="apdb", max_outer=300, gamma0=1e-2,
                                   tau_bar=th), np.zeros(6), np.zeros(2))
    assert all(r.inner_steps == 1 for r in rep.records)


def test_inner_cap_and_step_floor_on_known_psi():
    # L_yx = 4, L_xx = 0, c_alpha = 1, delta = 0, gamma0 = 1  =>  Psi = 0.25
    o = bilinear_box_problem(np.array([[4.0]]), c=np.array([0.3]))
    cfg = SolverConfig(algorithm="apdb", eta=0.5, tau_bar=1.0, delta=0.0, c_alpha=1.0,
                       c_beta=0.0, max_outer=500)
    psi = psi_bounds(o.lipschitz, 1.0, 1.0, 0.0, 0.0)[3]
    assert psi == pytest.approx(0.25)
    rep = run_apdb(o, cfg, [0.9], [-0.8])
    assert max(r.inner_steps for r in rep.records) <= 3
    assert min(r.tau for r in rep.records) >= 0.5 * psi


def test_nonmonotone_chain_respects_cap_and_inner_bound():
    o = bilinear_box_problem(np.array([[4.0]]), c=np.array([0.3]))
    tau_max, eta = 2.0, 0.5
    cfg = SolverConfig(algorithm="apdb", eta=eta, tau_bar=1.0, delta=0.0, c_alpha=1.0,
                       c_beta=0.0, tau_max=tau_max, max_outer=500)
    psi = 0.25
    rep = run_apdb(o, cfg, [0.9], [-0.8])
    assert rep.status != "diverged"
    for r in rep.records:
        assert r.tau <= tau_max
        nk = 1 + math.ceil(math.log((tau_max / psi) * math.sqrt(r.gamma)) / math.log(1 / eta))
        assert r.inner_steps <= nk


# -- full runs ---------------------------------------------------------------

def test_apdb_rps_without_lipschitz():
    full = matrix_game(RPS)
    o = strip_lipschitz(full)
    u = np.full(3, 1 / 3)
    x0, y0 = np.array([0.6, 0.3, 0.1]), np.array([0.2, 0.5, 0.3])
    viol = []

    def cb(info):
        d = delta_value(o, u, u, x0, y0, info["tau0"], info["sigma0"])
        viol.append(gap(o, info["x_avg"], info["y_avg"], u, u) - d / info["T"])

    cfg = SolverConfig(algorithm="apdb", max_outer=2000)
    rep = run_apdb(o, cfg, x0, y0, callback=cb)
    assert rep.status == "budget_exhausted" and max(viol) <= 1e-12
    res = cfg.resolve(o)
    psi = psi_bounds(full.lipschitz, res.gamma0, res.c_alpha, res.c_beta, res.delta)[3]
    T = rep.column("T")
    K = np.arange(1, T.size + 1)
    assert np.all(T >= res.eta * psi / rep.tau0 * K * (1 - 1e-12))
    ek, bound = rep.column("ek"), rep.column("ek_bound")
    assert np.all(ek <= bound + 1e-12)


def test_apdb_strongly_convex_schedule():
    o = bilinear_box_problem(np.array([[1.0, 0.5], [-0.3, 2.0]]), mu=1.0,
                             c=np.array([0.4, -0.2]))
    cfg = SolverConfig(algorithm="apdb", max_outer=5000)
    rep = run_apdb(o, cfg, [0.9, -0.9], [0.5, 0.5])
    res = cfg.resolve(o)
    psi1 = psi_bounds(o.lipschitz, res.gamma0, res.c_alpha, res.c_beta, res.delta)[0]
    Gam = res.mu * res.eta * psi1 * math.sqrt(res.gamma0)
    tau, sigma, T = rep.column("tau"), rep.column("sigma"), rep.column("T")
    K = np.arange(1, T.size + 1)
    # tau_k / sigma_k = 1/gamma_k <= 9 / (Gam^2 k^2)
    assert np.all((tau / sigma)[1:] <= 9.0 / (Gam ** 2 * K[1:] ** 2))
    sel = K >= 500
    assert np.polyfit(np.log(K[sel]), np.log(T[sel]), 1)[0] >= 1.8
    # t_k (1/tau_k + mu) = t_{k+1} / tau_{k+1}
    lhs = sigma[:-1] * (1 / tau[:-1] + res.mu)
    np.testing.assert_allclose(lhs, sigma[1:] / tau[1:], rtol=1e-12)
    # accepted step floor tau_k >= eta Psi sqrt(gamma0 / gamma_k)
    gamma = rep.column("gamma")
    assert np.all(tau >= res.eta * psi1 * np.sqrt(res.gamma0 / gamma) * (1 - 1e-12))


def test_exact_and_tilde_paired():
    o, _ = bounded_qcqp(5, 2, 2)
    results = {}
    for variant in ("exact", "tilde"):
        cfg = SolverConfig(algorithm="apdb", ek_variant=variant, max_outer=300,
                           tau_bar=1e-2, gamma0=1e-2)
        res = cfg.resolve(o)
        checks = []

        def cb(info, res=res):
            st = info["state"]
            ctx = ctx_for(o, info["x"], info["y"], st.tau, st.sigma, st.theta,
                          res.c_alpha / st.sigma_prev, res.c_beta / st.sigma_prev)
            a_next = res.c_alpha / st.sigma
            e = ek_exact(o, ctx, info["x_next"], info["y_next"], a_next, 0.0)
            t = ek_tilde(o, ctx, info["x_next"], info["y_next"], a_next, 0.0)
            checks.append((e, t, info["record"].ek_bound))

        rep = run_apdb(o, cfg, np.zeros(5), np.zeros(2), callback=cb)
        results[variant] = rep
        assert rep.status == "budget_exhausted"
        if variant == "tilde":
            for e, t, bound in checks:
                scale = 1e-9 * max(1.0, abs(bound))
                assert e <= t + scale and e <= bound + scale


# -- x-first variant ---------------------------------------------------------

def ball_projection_problem(mu=0.0):
    """min 0.5||x - a||^2 s.t. 0.5||x||^2 <= 2 over |x_i| <= 10, a = (3, 4).

    KKT by hand: x* = 2 a/||a|| = (1.2, 1.6), y* = ||a||/2 - 1 = 1.5.
    """
    a = np.array([3.0, 4.0])
    R = 10.0

    if mu > 0:
        def prox_f(xb, g, t):
            return np.clip((np.asarray(xb) / t - g) / (mu + 1 / t), -R, R)
    else:
        def prox_f(xb, g, t):
            return project_box(np.asarray(xb) - t * np.asarray(g), -R, R)

    p = ConicProblem(
        prox_f=prox_f,
        g_value=lambda x: float(0.5 * (1 - mu) * x @ x - a @ x + 12.5),
        g_grad=lambda x: (1 - mu) * np.asarray(x) - a,
        G_value=lambda x: np.array([0.5 * float(x @ x) - 2.0]),
        G_jacobian_T_apply=lambda x, y: float(y[0]) * np.asarray(x),
        cone=nonneg_orthant(), m=1, L_g=1.0 - mu, mu=mu,
        f_value=lambda x: 0.5 * mu * float(x @ x))
    return build_saddle_from_conic(p), np.array([1.2, 1.6]), np.array([1.5])


@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_switched_dual_bound_and_convergence(mu):
    o, xs, ys = ball_projection_problem(mu)
    x0, y0 = np.array([-3.0, 2.0]), np.array([0.0])
    cfg = SolverConfig(algorithm="apdb_switched", mu=mu, gamma0=1.0, max_outer=4000)
    norms = []
    rep = run_apdb_switched(o, cfg, x0, y0,
                            callback=lambda i: norms.append(np.linalg.norm(i["y_next"])))
    g0 = 1.0
    B = np.linalg.norm(ys) + math.sqrt(g0 * np.sum((xs - x0) ** 2) + np.sum((ys - y0) ** 2))
    assert max(norms) <= B
    np.testing.assert_allclose(rep.x_final, xs, atol=1e-4)
    T = rep.column("T")
    K = np.arange(1, T.size + 1)
    sel = K >= 400
    slope = np.polyfit(np.log(K[sel]), np.log(T[sel]), 1)[0]
    assert slope >= (1.8 if mu > 0 else 0.95)


def test_switched_update_order_with_theta_zero():
    # separable phi(x, y) = |x|^2/2 - |y - 1|^2/2: no coupling
    o = SaddleOracle(
        phi=lambda x, y: 0.5 * float(x @ x) - 0.5 * float((y - 1) @ (y - 1)),
        grad_x=lambda x, y: np.asarray(x), grad_y=lambda x, y: 1.0 - np.asarray(y),
        prox_f=lambda xb, g, t: project_box(np.asarray(xb) - t * np.asarray(g), -1, 1),
        prox_h=lambda yb, s, t: project_box(np.asarray(yb) + t * np.asarray(s), 0, 0.5))
    x, y = np.array([0.8, -2.0]), np.array([0.1, 0.4])
    xp, yp = np.array([5.0, 5.0]), np.array([-3.0, 3.0])
    xn, yn, _ = switched_step(o, x, y, xp, yp, 0.3, 0.2, 0.0)
    np.testing.assert_array_equal(xn, np.clip(x - 0.3 * x, -1, 1))
    np.testing.assert_array_equal(yn, np.clip(y + 0.2 * (1 - y), 0, 0.5))

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from saddlepd.core import (ENTROPY, EUCLIDEAN, BregmanGeometry, LipschitzTriple,
                           SaddleOracle, as_vector, bregman_entropy, bregman_euclidean,
                           entropy_prox_simplex, project_box, project_box_hyperplane,
                           project_orthant_ball, project_simplex)

finite = st.floats(-50, 50, allow_nan=False)


def random_simplex(rng, n):
    w = rng.exponential(size=n) + 1e-3
    return w / w.sum()


def qp_active_set(v, lo, hi, a=None, beta=0.0):
    """min 0.5||x - v||^2 over lo <= x <= hi (and a'x = beta) by enumerating
    which coordinates sit at a bound. Independent of the library code."""
    n = v.size
    best, best_val = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pat = np.array(pattern)
        x = np.where(pat == 1, lo, np.where(pat == 2, hi, v))
        if not np.all(np.isfinite(x)):
            continue
        if a is not None:
            free = pat == 0
            if not np.any(free):
                if abs(a @ x - beta) > 1e-9:
                    continue
            else:
                nu = (a[~free] @ x[~free] + a[free] @ v[free] - beta) / (a[free] @ a[free])
                x = x.copy()
                x[free] = v[free] - nu * a[free]
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        val = 0.5 * np.sum((x - v) ** 2)
        if val < best_val:
            best, best_val = x, val
    return best


# -- vectors and geometries ------------------------------------------------

def test_as_vector_rejects_non_finite_and_is_read_only():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([])
    v = as_vector([1, 2])
    with pytest.raises(ValueError):
        v[0] = 3.0


def test_bregman_euclidean_examples():
    assert bregman_euclidean([1, 2], [1, 2]) == 0.0
    assert bregman_euclidean([3, 0], [0, 4]) == 12.5
    rng = np.random.default_rng(0)
    x, xb = rng.standard_normal(50), rng.standard_normal(50)
    term_by_term = 0.5 * sum((a - b) * (a - b) for a, b in zip(x, xb))
    assert bregman_euclidean(x, xb) == pytest.approx(term_by_term, rel=1e-14)
    with pytest.raises(ValueError):
        bregman_euclidean([1, 2], [1, 2, 3])


def test_bregman_entropy_examples():
    assert bregman_entropy([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert bregman_entropy([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(ValueError):
        bregman_entropy([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(ValueError):
        bregman_entropy([0.7, 0.7], [0.5, 0.5])


def test_entropy_pinsker_on_random_pairs():
    rng = np.random.default_rng(1)
    for _ in range(200):
        y, yb = random_simplex(rng, 5), random_simplex(rng, 5)
        assert bregman_entropy(y, yb) >= 0.5 * np.sum(np.abs(y - yb)) ** 2 - 1e-15


def test_entropy_matches_mirror_map_definition():
    rng = np.random.default_rng(2)
    phi = lambda z: float(np.sum(z * np.log(z)))
    for _ in range(20):
        y, yb = random_simplex(rng, 4), random_simplex(rng, 4)
        direct = phi(y) - phi(yb) - ENTROPY.mirror_gradient(yb) @ (y - yb)
        assert ENTROPY.distance(y, yb) == pytest.approx(direct, abs=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_euclidean_distance_strong_convexity(x, xb):
    x, xb = np.array(x), np.array(xb)
    assert EUCLIDEAN.distance(x, x) == 0.0
    assert EUCLIDEAN.distance(x, xb) >= 0.5 * EUCLIDEAN.norm(x - xb) ** 2 - 1e-9


def test_geometry_kind_validated():
    with pytest.raises(ValueError):
        BregmanGeometry("manhattan")


def test_lipschitz_triple_invariants():
    LipschitzTriple(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        LipschitzTriple(1.0, 0.0)
    with pytest.raises(ValueError):
        LipschitzTriple(-1.0, 1.0)


def test_oracle_rejects_strong_convexity_with_entropy():
    z = lambda *a: 0.0
    with pytest.raises(ValueError):
        SaddleOracle(phi=z, grad_x=z, grad_y=z, prox_f=z, prox_h=z, geom_x=ENTROPY, mu=1.0)


# -- projections -------------------------------------------------------------

def test_project_box_examples():
    np.testing.assert_array_equal(project_box([12, -15, 3], -10, 10), [10, -10, 3])
    v = np.array([0.1, -0.4, 2.0])
    np.testing.assert_array_equal(project_box(v, -10, 10), v)
    with pytest.raises(ValueError):
        project_box(v, 1, 0)


def test_project_box_per_coordinate_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        v = 20 * rng.standard_normal(4)
        cands = np.stack([np.full(4, -10.0), v, np.full(4, 10.0)])
        ok = (cands >= -10) & (cands <= 10)
        cost = np.where(ok, (cands - v) ** 2, np.inf)
        expect = cands[np.argmin(cost, axis=0), np.arange(4)]
        np.testing.assert_array_equal(project_box(v, -10, 10), expect)


def test_project_simplex_examples():
    np.testing.assert_allclose(project_simplex([0.6, 0.8]), [0.4, 0.6], atol=1e-15)
    np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0], atol=1e-15)


def test_project_simplex_active_set_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        v = 2 * rng.standard_normal(6)
        x = project_simplex(v)
        assert abs(x.sum() - 1.0) <= 1e-12 and x.min() >= 0.0
        ref = qp_active_set(v, 0.0, np.inf, a=np.ones(6), beta=1.0)
        np.testing.assert_allclose(x, ref, atol=1e-8)


def test_entropy_prox_examples():
    yb = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(entropy_prox_simplex(yb, np.zeros(3), 2.0), yb, atol=1e-15)
    np.testing.assert_allclose(entropy_prox_simplex([0.5, 0.5], [math.log(3), 0.0], 1.0),
                               [0.75, 0.25], atol=1e-15)


def test_entropy_prox_matches_numeric_minimization():
    rng = np.random.default_rng(5)
    yb = random_simplex(rng, 3)
    s = rng.standard_normal(3)
    sigma = 0.7

    def obj(u):
        y = np.append(u, 1.0 - u.sum())
        if np.any(y <= 0):
            return 1e6
        return -s @ y + bregman_entropy(y, yb) / sigma

    res = minimize(obj, yb[:2], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    num = np.append(res.x, 1.0 - res.x.sum())
    np.testing.assert_allclose(entropy_prox_simplex(yb, s, sigma), num, atol=1e-6)


def test_entropy_prox_overflow_guard_stays_interior():
    out = entropy_prox_simplex([0.5, 0.5], [1e6, -1e6], 10.0)
    assert np.all(out > 0.0) and abs(out.sum() - 1.0) < 1e-15


def test_box_hyperplane_examples():
    np.testing.assert_allclose(project_box_hyperplane([2, 2], 1.0, [1, -1]), [1, 1])
    np.testing.assert_allclose(project_box_hyperplane([1, 1], 1.0, [1, 1]), [0, 0])
    with pytest.raises(ValueError):
        project_box_hyperplane([1, 1], 1.0, [1, 0.5])


def test_box_hyperplane_active_set_oracle():
    rng = np.random.default_rng(6)
    for _ in range(100):
        v = 2 * rng.standard_normal(8)
        b = np.where(rng.random(8) < 0.5, 1.0, -1.0)
        x = project_box_hyperplane(v, 1.0, b)
        assert abs(b @ x) <= 1e-10
        ref = qp_active_set(v, 0.0, 1.0, a=b, beta=0.0)
        np.testing.assert_allclose(x, ref, atol=1e-7)


def test_box_hyperplane_without_upper_bound():
    rng = np.random.default_rng(7)
    for _ in range(30):
        v = 3 * rng.standard_normal(5)
        b = np.array([1, -1, 1, -1, 1.0])
        x = project_box_hyperplane(v, np.inf, b)
        ref = qp_active_set(v, 0.0, np.inf, a=b, beta=0.0)
        np.testing.assert_allclose(x, ref, atol=1e-8)


def test_project_orthant_ball_examples():
    np.testing.assert_array_equal(project_orthant_ball([1, -2]), [1, 0])
    np.testing.assert_allclose(project_orthant_ball([3, 4], 1.0), [0.6, 0.8])


def test_project_orthant_ball_sweep_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        v = 3 * rng.standard_normal(2)
        B = rng.uniform(0.5, 2.0)
        # sweep the feasible quarter-disc in polar coordinates
        r = np.linspace(0, B, 401)[:, None]
        a = np.linspace(0, np.pi / 2, 401)[None, :]
        pts = np.stack([r * np.cos(a), r * np.sin(a)], axis=-1).reshape(-1, 2)
        best = pts[np.argmin(np.sum((pts - v) ** 2, axis=1))]
        x = project_orthant_ball(v, B)
        assert np.sum((x - v) ** 2) <= np.sum((best - v) ** 2) + 1e-12
        assert np.linalg.norm(x - best) <= 2 * B * np.pi / 400


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4))
def test_projections_idempotent_and_nonexpansive(u, v):
    u, v = np.array(u), np.array(v)
    b = np.array([1.0, -1.0, 1.0, -1.0])
    maps = [lambda z: project_box(z, -1, 1), project_simplex,
            lambda z: project_orthant_ball(z, 2.0),
            lambda z: project_box_hyperplane(z, 1.0, b)]
    for P in maps:
        pu, pv = P(u), P(v)
        np.testing.assert_allclose(P(pu), pu, atol=1e-12)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

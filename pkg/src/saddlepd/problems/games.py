"""Bilinear matrix games ``min_{x in simplex} max_{y in simplex} x'Ay``."""

from __future__ import annotations

import math

import numpy as np

from ..core import (ENTROPY, EUCLIDEAN, LipschitzTriple, SaddleOracle,
                    entropy_prox_simplex, indicator, in_simplex, project_simplex)
from .common import spectral_norm

__all__ = ["RPS", "matrix_game", "bilinear_box_problem"]

RPS = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def _simplex_prox(geom, sign):
    # sign=+1: primal prox (descend along -g); sign=-1: dual prox (ascend along s)
    if geom == "entropy":
        return lambda z, g, t: entropy_prox_simplex(z, -sign * np.asarray(g), t)
    return lambda z, g, t: project_simplex(np.asarray(z) - sign * t * np.asarray(g))


def matrix_game(A, geometry="euclidean"):
    """Saddle oracle of a zero-sum game; the row player minimizes.

    ``L_xx = L_yy = 0`` and ``L_yx = ||A||`` (spectral norm). With the
    entropy geometry the Lipschitz constant is taken w.r.t. the l1 norm on
    both sides, i.e. the largest absolute entry.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise ValueError("A must be a finite matrix")
    geom = ENTROPY if geometry == "entropy" else EUCLIDEAN
    if geometry == "entropy":
        L = float(np.max(np.abs(A)))
    else:
        L = spectral_norm(A, tol=1e-12)
        L = max(L, float(np.linalg.norm(A, 2)))
    if not L > 0.0:
        raise ValueError("payoff matrix is zero; the game has no coupling")
    lip = LipschitzTriple(L_xx=0.0, L_yx=L, L_yy=0.0)
    A.setflags(write=False)
    member = indicator(in_simplex())
    return SaddleOracle(
        phi=lambda x, y: float(np.asarray(x) @ A @ np.asarray(y)),
        grad_x=lambda x, y: A @ np.asarray(y),
        grad_y=lambda x, y: A.T @ np.asarray(x),
        prox_f=_simplex_prox(geometry, +1), prox_h=_simplex_prox(geometry, -1),
        geom_x=geom, geom_y=geom, mu=0.0, lipschitz=lip,
        f_value=member, h_value=member, affine_in_y=True,
        name=f"matrix_game_{A.shape[0]}x{A.shape[1]}", extras={"A": A})


def bilinear_box_problem(K, mu=0.0, c=None, radius=1.0):
    """``min_{|x|<=R} mu/2 ||x||^2 + c'x + <Kx, y>  -  max over |y|<=R``.

    A bilinear problem with box constraints on both sides; with ``mu > 0``
    the quadratic sits in ``f`` so the accelerated schedule applies.
    """
    K = np.array(K, dtype=float)
    m, n = K.shape
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    R = float(radius)

    def prox_f(xbar, g, tau):
        return np.clip((np.asarray(xbar) / tau - g - c) / (mu + 1.0 / tau), -R, R)

    def prox_h(ybar, s, sigma):
        return np.clip(np.asarray(ybar) + sigma * np.asarray(s), -R, R)

    def f_value(x):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > R + 1e-10):
            return math.inf
        return 0.5 * mu * float(x @ x) + float(c @ x)

    def h_value(y):
        return 0.0 if np.all(np.abs(np.asarray(y)) <= R + 1e-10) else math.inf

    L = float(np.linalg.norm(K, 2))
    return SaddleOracle(
        phi=lambda x, y: float(np.asarray(y) @ K @ np.asarray(x)),
        grad_x=lambda x, y: K.T @ np.asarray(y),
        grad_y=lambda x, y: K @ np.asarray(x),
        prox_f=prox_f, prox_h=prox_h, mu=mu,
        lipschitz=LipschitzTriple(L_xx=0.0, L_yx=L, L_yy=0.0),
        f_value=f_value, h_value=h_value, affine_in_y=True,
        name="bilinear_box", extras={"K": K, "c": c, "radius": R})

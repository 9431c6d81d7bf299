"""Small linear-algebra helpers shared by the problem instances."""

import numpy as np

__all__ = ["spectral_norm", "lipschitz_upper"]


def spectral_norm(A, tol=1e-6, max_iter=10_000, seed=0):
    """Largest singular value of ``A`` by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = np.sqrt(nw)
        if abs(new - est) <= tol * new:
            return float(new)
        est = new
    return float(est)


def lipschitz_upper(A, inflate=0.01):
    """Power-iteration norm estimate inflated by ``inflate`` so it can serve
    as an upper bound."""
    return (1.0 + inflate) * spectral_norm(A)

"""Ensemble weighting strategies over a library of base kernels.

Three ways to turn per-kernel cross-validated residuals into simplex
weights: uniform averaging, exponential weighting of the residual norms,
and stacking (simplex-constrained least squares on the residual matrix).
"""

from __future__ import annotations

import numpy as np

STRATEGIES = ("avg", "exp", "stack")

# "erm" appears as a strategy name in some configs; it selects stacking.
STRATEGY_ALIASES = {"erm": "stack"}


def check_strategy(strategy: str) -> str:
    strategy = STRATEGY_ALIASES.get(strategy.lower(), strategy.lower())
    if strategy not in STRATEGIES:
        known = ", ".join(STRATEGIES + tuple(STRATEGY_ALIASES))
        raise ValueError(f"unknown ensemble strategy {strategy!r}; choose from {known}")
    return strategy


def _residual_matrix(cv_residuals) -> np.ndarray:
    e = np.column_stack([np.asarray(r, dtype=float).ravel() for r in cv_residuals])
    if not np.all(np.isfinite(e)):
        raise ValueError("cross-validated residuals contain non-finite values")
    return e


def weights_avg(d: int) -> np.ndarray:
    """Uniform weights 1/D."""
    if d < 1:
        raise ValueError(f"need at least one kernel, got D={d}")
    return np.full(d, 1.0 / d)


def weights_exp(cv_residuals, beta: float = 1.0) -> np.ndarray:
    """Softmax of the negative squared residual norms, scaled by beta.

    ``u_d`` is proportional to ``exp(-||e_d||^2 / beta)``; the largest
    exponent is subtracted before exponentiation so the normalization is
    always well posed.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    e = _residual_matrix(cv_residuals)
    scores = -np.sum(e**2, axis=0) / beta
    scores -= scores.max()
    w = np.exp(scores)
    return w / w.sum()


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    srt = np.sort(v)[::-1]
    css = np.cumsum(srt) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = srt - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.clip(v - theta, 0.0, None)


def weights_stack(cv_residuals, max_iter: int = 10_000, tol: float = 1e-12) -> np.ndarray:
    """Stacking weights: minimize ``||sum_d u_d e_d||^2`` over the simplex.

    Solved by projected gradient descent from the uniform start with a
    fixed 1/L step, L the largest eigenvalue of the residual Gram matrix.
    For rank-deficient problems the uniform start and fixed budget make
    the returned minimizer deterministic.
    """
    e = _residual_matrix(cv_residuals)
    d = e.shape[1]
    g = e.T @ e
    u = np.full(d, 1.0 / d)
    lip = float(np.linalg.eigvalsh(g)[-1])
    if lip <= 0:  # all residuals zero: every simplex point is optimal
        return u
    obj = float(u @ g @ u)
    for _ in range(max_iter):
        u_next = project_simplex(u - (g @ u) / lip)
        obj_next = float(u_next @ g @ u_next)
        u = u_next
        if abs(obj - obj_next) <= tol:
            break
        obj = obj_next
    return u


def compute_weights(strategy: str, cv_residuals, beta: float = 1.0) -> np.ndarray:
    """Dispatch on the strategy name (``avg``, ``exp``, ``stack``/``erm``)."""
    strategy = check_strategy(strategy)
    if strategy == "avg":
        return weights_avg(len(cv_residuals))
    if strategy == "exp":
        return weights_exp(cv_residuals, beta=beta)
    return weights_stack(cv_residuals)

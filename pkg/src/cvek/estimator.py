"""Fitting the kernel-ensemble null model.

The pipeline has three stages: tune and fit each base kernel (per-kernel
ridge penalty plus leave-one-out residuals), combine the per-kernel
smoothers with ensemble weights, and recover the ensemble kernel matrix
whose ridge fit reproduces the combined smoother.  A final ridge solve on
the ensemble kernel yields the intercept, dual coefficients, and noise
estimates used by the hypothesis test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .ensemble import compute_weights
from .errors import NumericalError
from .kernels import GramMatrix, KernelSpec, as_gram_array, normalize_trace
from .tuning import KernelEigen, default_lambda_grid, loo_residuals, select_lambda

# Smoother eigenvalues are capped at 1 - EIG_CLIP before the delta/(1-delta)
# map, bounding the conditioning of the recovered ensemble kernel.
EIG_CLIP = 1e-8


@dataclass
class BaseFit:
    """One tuned base kernel: penalty, smoother, and CV residuals."""

    spec: KernelSpec | None
    lambda_hat: float
    smoother: np.ndarray
    cv_residuals: np.ndarray
    objective: float


@dataclass
class EnsembleFit:
    """Fitted null model produced by :func:`fit_null`."""

    u_hat: np.ndarray
    base_fits: list[BaseFit] = field(repr=False)
    a_hat: np.ndarray = field(repr=False)
    k_ens: GramMatrix = field(repr=False)
    lambda_k: float = 0.0
    lambda_ens: float = 0.0
    intercept: float = 0.0
    alpha: np.ndarray = field(default=None, repr=False)
    sigma2_hat: float = 0.0
    tau_hat: float = 0.0

    def fitted_values(self) -> np.ndarray:
        """In-sample mean of the null model, intercept + K alpha."""
        return self.intercept + self.k_ens.values @ self.alpha


def fit_base_kernels(y, grams, criterion: str = "loocv", grid=None) -> list[BaseFit]:
    """Tune each kernel in the library and collect its CV residuals.

    Every Gram matrix is trace-normalized before tuning, so penalties are
    comparable across the library.  Residuals are the exact leave-one-out
    residuals at the selected penalty.
    """
    y = np.asarray(y, dtype=float).ravel()
    grid = default_lambda_grid() if grid is None else grid
    fits = []
    for gram in grams:
        normalized = normalize_trace(gram)
        if normalized.n != y.size:
            raise ValueError(
                f"Gram matrix size {normalized.n} does not match response length {y.size}"
            )
        eigen = KernelEigen(normalized)
        lam, obj = select_lambda(criterion, y, normalized, grid, eigen)
        fits.append(
            BaseFit(
                spec=normalized.source_spec,
                lambda_hat=lam,
                smoother=eigen.smoother(lam),
                cv_residuals=loo_residuals(y, normalized, lam, eigen),
                objective=obj,
            )
        )
    return fits


def ensemble_matrix(u, fits: list[BaseFit]) -> np.ndarray:
    """Weighted sum of the base smoothers."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size != len(fits):
        raise ValueError(f"{u.size} weights for {len(fits)} base fits")
    out = np.zeros_like(fits[0].smoother)
    for w, fit in zip(u, fits):
        out += w * fit.smoother
    return (out + out.T) / 2.0


def ensemble_kernel(a_hat: np.ndarray, base_lambdas) -> tuple[GramMatrix, float]:
    """Recover the kernel matrix whose ridge smoother equals ``a_hat``.

    With ``a_hat = U diag(delta) U'``, the kernel is
    ``lambda_K * U diag(delta / (1 - delta)) U'`` where

        lambda_K = min(1, 1 / sum_k delta_k/(1-delta_k), min_d lambda_d).

    The scale cancels in ``K (K + lambda_K I)^-1``, so the reconstruction
    identity holds for any positive lambda_K; this choice keeps the kernel
    entries bounded.  Eigenvalues are clamped into [0, 1 - 1e-8] first.
    """
    base_lambdas = [float(v) for v in np.atleast_1d(base_lambdas)]
    if not base_lambdas:
        raise ValueError("need at least one base lambda")
    delta, u = np.linalg.eigh(np.asarray(a_hat, dtype=float))
    if delta[-1] > 1.0 + EIG_CLIP:
        raise NumericalError(
            f"ensemble matrix has eigenvalue {delta[-1]:.6g} > 1; not a valid smoother"
        )
    delta = np.clip(delta, 0.0, 1.0 - EIG_CLIP)
    ratios = delta / (1.0 - delta)
    total = float(ratios.sum())
    lambda_k = min(1.0, 1.0 / total if total > 0 else np.inf, min(base_lambdas))
    k = (u * (lambda_k * ratios)) @ u.T
    k = (k + k.T) / 2.0
    return GramMatrix(k, source_spec=None, trace_normalized=False), lambda_k


def estimate_ridge(gram, y, lam: float) -> tuple[float, np.ndarray]:
    """Joint intercept + dual-coefficient solve for a fixed penalty.

    Minimizes ``||y - b - h||^2 + lam ||h||_K^2`` over the scalar intercept
    b and kernel function h; the returned alpha satisfies
    ``(K + lam I) alpha = y - b`` and fitted values are ``b + K alpha``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    k = as_gram_array(gram)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    try:
        cho = scipy.linalg.cho_factor(k + lam * np.eye(n), lower=True)
        z_y = scipy.linalg.cho_solve(cho, y)
        z_1 = scipy.linalg.cho_solve(cho, np.ones(n))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system is singular at lambda={lam:g}") from exc
    if not (np.all(np.isfinite(z_y)) and np.all(np.isfinite(z_1))):
        raise NumericalError(f"ridge solve produced non-finite values at lambda={lam:g}")
    intercept = float(z_y.sum() / z_1.sum())
    alpha = z_y - intercept * z_1
    return intercept, alpha


def estimate_noise(y, smoother0: np.ndarray, lambda_ens: float) -> tuple[float, float]:
    """Noise and signal variance from the fitted ensemble smoother.

    ``sigma2 = yc'(I - A0) yc / (n - tr A0)`` on the centered response,
    floored at ``1e-12 var(y)`` so downstream covariance solves stay
    positive definite; ``tau = sigma2 / lambda_ens``.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    tra = float(np.trace(smoother0))
    if n <= tra:
        raise NumericalError(
            f"saturated model: effective parameters {tra:.3f} >= sample size {n}"
        )
    yc = y - y.mean()
    quad = float(yc @ (yc - smoother0 @ yc))
    sigma2 = max(quad, 0.0) / (n - tra)
    sigma2 = max(sigma2, 1e-12 * float(np.var(y)))
    return sigma2, sigma2 / lambda_ens


def fit_null(
    y,
    grams,
    criterion: str = "loocv",
    strategy: str = "stack",
    beta: float = 1.0,
    grid=None,
) -> EnsembleFit:
    """Full null-model fit over a kernel library.

    Stages: per-kernel tuning and CV residuals, ensemble weights by the
    chosen strategy, combined smoother and recovered ensemble kernel,
    then a fresh penalty search on the ensemble kernel followed by the
    ridge and noise estimates.
    """
    y = np.asarray(y, dtype=float).ravel()
    grid = default_lambda_grid() if grid is None else grid
    fits = fit_base_kernels(y, grams, criterion=criterion, grid=grid)
    u_hat = compute_weights(strategy, [f.cv_residuals for f in fits], beta=beta)
    a_hat = ensemble_matrix(u_hat, fits)
    k_ens, lambda_k = ensemble_kernel(a_hat, [f.lambda_hat for f in fits])
    eigen = KernelEigen(k_ens)
    lambda_ens, _ = select_lambda(criterion, y, k_ens, grid, eigen)
    intercept, alpha = estimate_ridge(k_ens, y, lambda_ens)
    sigma2_hat, tau_hat = estimate_noise(y, eigen.smoother(lambda_ens), lambda_ens)
    return EnsembleFit(
        u_hat=u_hat,
        base_fits=fits,
        a_hat=a_hat,
        k_ens=k_ens,
        lambda_k=lambda_k,
        lambda_ens=lambda_ens,
        intercept=intercept,
        alpha=alpha,
        sigma2_hat=sigma2_hat,
        tau_hat=tau_hat,
    )

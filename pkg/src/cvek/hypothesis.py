"""Score test for nonlinear interaction between two feature groups.

The null model is additive: each base kernel contributes the sum of its
per-group Gram matrices, and the kernel ensemble fits that additive
structure.  The interaction space is the tensor product of the two group
spaces, whose Gram matrix is the elementwise (Hadamard) product of the
per-group matrices.  Treating the interaction strength as a variance
component gives the score statistic

    T0 = tau * (y - mu)' V0^-1 K12 V0^-1 (y - mu),   V0 = sigma2 I + tau K0,

whose null distribution is approximated either by a Satterthwaite-matched
scaled chi-square or by a parametric bootstrap from the fitted null model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import gammaincc

from .errors import NumericalError
from .estimator import EnsembleFit, fit_null
from .kernels import (
    GramMatrix,
    KernelSpec,
    as_gram_array,
    gram_matrix,
    normalize_trace,
    standardize,
)
from .tuning import default_lambda_grid

TEST_KINDS = ("asym", "boot")

DEFAULT_BOOTSTRAP = 100


@dataclass
class NullModel:
    """Quantities the score test needs from a fitted null model."""

    mu_hat: np.ndarray
    k0: np.ndarray = field(repr=False)
    dk0: np.ndarray = field(repr=False)
    v0: np.ndarray = field(repr=False)
    tau_hat: float = 0.0
    sigma2_hat: float = 0.0


@dataclass
class TestResult:
    """Outcome of one interaction test."""

    statistic: float
    pvalue: float
    method: str
    b: int | None = None
    kappa_hat: float | None = None
    nu_hat: float | None = None
    seed: object = None
    fit: EnsembleFit | None = field(default=None, repr=False)


def build_null_model(y, fit: EnsembleFit, dk0) -> NullModel:
    """Assemble the test-ready null model from an ensemble fit."""
    k0 = fit.k_ens.values
    dk0 = as_gram_array(dk0)
    n = k0.shape[0]
    v0 = fit.sigma2_hat * np.eye(n) + fit.tau_hat * k0
    return NullModel(
        mu_hat=fit.fitted_values(),
        k0=k0,
        dk0=dk0,
        v0=v0,
        tau_hat=fit.tau_hat,
        sigma2_hat=fit.sigma2_hat,
    )


def _cho_v0(model: NullModel):
    try:
        return scipy.linalg.cho_factor(model.v0, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("null covariance V0 is not positive definite") from exc


def test_statistic(y, model: NullModel) -> float:
    """Score statistic; V0 is applied through an SPD solve, never inverted."""
    y = np.asarray(y, dtype=float).ravel()
    resid = y - model.mu_hat
    cho = _cho_v0(model)
    z = scipy.linalg.cho_solve(cho, resid)
    return float(model.tau_hat * z @ model.dk0 @ z)


def _reml_information(model: NullModel):
    """Efficient information of the interaction variance component.

    Uses the restricted-likelihood information with intercept-only fixed
    effects: P0 = V0^-1 - V0^-1 1 (1' V0^-1 1)^-1 1' V0^-1, blocks
    I_ab = tr(P0 M_a P0 M_b) / 2 with M_delta = tau K12, M_tau = K0,
    M_sigma = I, and the nuisance block (tau, sigma2) projected out.
    """
    cho = _cho_v0(model)
    n = model.v0.shape[0]
    v_inv = scipy.linalg.cho_solve(cho, np.eye(n))
    v1 = v_inv @ np.ones(n)
    p0 = v_inv - np.outer(v1, v1) / float(v1.sum())

    m_delta = model.tau_hat * model.dk0
    pm_delta = p0 @ m_delta
    pm_tau = p0 @ model.k0
    # M_sigma = I, so P0 M_sigma = P0
    i_dd = 0.5 * float(np.sum(pm_delta * pm_delta.T))
    i_dt = 0.5 * float(np.sum(pm_delta * pm_tau.T))
    i_ds = 0.5 * float(np.sum(pm_delta * p0.T))
    i_tt = 0.5 * float(np.sum(pm_tau * pm_tau.T))
    i_ts = 0.5 * float(np.sum(pm_tau * p0.T))
    i_ss = 0.5 * float(np.sum(p0 * p0.T))

    i_theta = np.array([[i_tt, i_ts], [i_ts, i_ss]])
    i_cross = np.array([i_dt, i_ds])
    try:
        efficient = i_dd - float(i_cross @ np.linalg.solve(i_theta, i_cross))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("nuisance information block is singular") from exc
    mean_t = model.tau_hat * float(np.sum(v_inv * model.dk0.T))
    return mean_t, efficient


def satterthwaite_null(model: NullModel) -> tuple[float, float]:
    """Scale and degrees of freedom of the matched chi-square null.

    Matching E(T) = m and Var(T) = I_eff gives kappa = I_eff / (2 m) and
    nu = 2 m^2 / I_eff, so kappa*nu = m and 2*kappa^2*nu = I_eff exactly.
    """
    mean_t, efficient = _reml_information(model)
    if mean_t <= 0 or efficient <= 0:
        raise NumericalError(
            f"degenerate null model: E(T)={mean_t:.3e}, information={efficient:.3e}"
        )
    kappa = efficient / (2.0 * mean_t)
    nu = 2.0 * mean_t**2 / efficient
    return kappa, nu


def asymptotic_pvalue(t0: float, kappa: float, nu: float) -> float:
    """Upper-tail probability of ``kappa * chi2_nu`` at ``t0``.

    Computed as the regularized upper incomplete gamma Q(nu/2, t0/(2 kappa)),
    valid for non-integer degrees of freedom.
    """
    if not (np.isfinite(t0) and np.isfinite(kappa) and np.isfinite(nu)):
        raise ValueError("non-finite inputs to the chi-square tail")
    if kappa <= 0 or nu <= 0:
        raise ValueError(f"kappa and nu must be positive, got kappa={kappa}, nu={nu}")
    return float(gammaincc(nu / 2.0, max(t0, 0.0) / (2.0 * kappa)))


def _seed_tuple(seed) -> tuple[int, ...]:
    if seed is None:
        return (0,)
    if np.isscalar(seed):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def bootstrap_pvalue(
    y, model: NullModel, b: int = DEFAULT_BOOTSTRAP, seed=0, correction: bool = False
) -> tuple[float, np.ndarray]:
    """Parametric-bootstrap p-value for the observed score statistic.

    Each replicate resamples ``y* = mu + e`` with ``e ~ N(0, sigma2 I)``
    and recomputes the statistic with the null quantities held fixed; the
    p-value is the fraction of replicate statistics strictly above the
    observed one.  Replicate ``b`` draws from a stream derived from
    ``(seed, b)``, so the replicates are order-independent.  With
    ``correction`` the estimate (1 + count) / (1 + B) is returned instead
    of the raw proportion.
    """
    if b < 1:
        raise ValueError(f"bootstrap needs B >= 1 replicates, got {b}")
    if model.sigma2_hat <= 0:
        raise NumericalError(f"bootstrap requires sigma2 > 0, got {model.sigma2_hat:.3e}")
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    t_obs = test_statistic(y, model)

    cho = _cho_v0(model)
    weight = scipy.linalg.cho_solve(cho, model.dk0)
    weight = scipy.linalg.cho_solve(cho, weight.T).T  # V0^-1 K12 V0^-1
    sd = np.sqrt(model.sigma2_hat)
    base = _seed_tuple(seed)

    stats = np.empty(b)
    for rep in range(b):
        rng = np.random.default_rng(base + (rep,))
        eps = sd * rng.standard_normal(n)
        stats[rep] = model.tau_hat * eps @ weight @ eps
    exceed = int(np.sum(stats > t_obs))
    pvalue = (1 + exceed) / (1 + b) if correction else exceed / b
    return float(pvalue), stats


def additive_null_grams(x1, x2, library: list[KernelSpec]):
    """Per-kernel Gram matrices for the additive (no-interaction) model.

    Both feature blocks are standardized; for every library kernel the two
    per-group matrices are trace-normalized, summed, and the sum
    trace-normalized again.  Returns ``(base, pairs)`` where ``pairs``
    holds the normalized per-group matrices reused by the interaction
    kernel.
    """
    if not library:
        raise ValueError("kernel library is empty")
    x1s = standardize(x1)
    x2s = standardize(x2)
    base: list[GramMatrix] = []
    pairs: list[tuple[GramMatrix, GramMatrix]] = []
    for spec in library:
        g1 = normalize_trace(gram_matrix(spec, x1s))
        g2 = normalize_trace(gram_matrix(spec, x2s))
        summed = normalize_trace(g1.values + g2.values)
        summed.source_spec = spec
        base.append(summed)
        pairs.append((g1, g2))
    return base, pairs


def interaction_matrix(pairs, u=None) -> GramMatrix:
    """Trace-normalized interaction Gram matrix.

    Per kernel the Hadamard product of the per-group matrices; multiple
    kernels are combined with the ensemble weights ``u`` before the final
    normalization.
    """
    if u is None:
        u = np.full(len(pairs), 1.0 / len(pairs))
    u = np.asarray(u, dtype=float).ravel()
    if u.size != len(pairs):
        raise ValueError(f"{u.size} weights for {len(pairs)} kernel pairs")
    combined = np.zeros_like(pairs[0][0].values)
    for w, (g1, g2) in zip(u, pairs):
        combined += w * (g1.values * g2.values)
    return normalize_trace(combined)


def run_test(
    y,
    x1,
    x2,
    library: list[KernelSpec],
    criterion: str = "loocv",
    strategy: str = "stack",
    test_kind: str = "boot",
    b: int = DEFAULT_BOOTSTRAP,
    seed=0,
    grid=None,
    beta: float = 1.0,
    interaction_spec: KernelSpec | None = None,
    boot_correction: bool = False,
) -> TestResult:
    """Fit the additive null ensemble and test for interaction.

    ``interaction_spec`` pins the interaction kernel to a single fixed
    family; by default the interaction matrix shares the fitted ensemble
    weights across the library.  ``test_kind`` selects the Satterthwaite
    chi-square (``asym``) or the parametric bootstrap (``boot``).
    """
    if test_kind not in TEST_KINDS:
        raise ValueError(f"unknown test kind {test_kind!r}; choose from {', '.join(TEST_KINDS)}")
    y = np.asarray(y, dtype=float).ravel()
    grid = default_lambda_grid() if grid is None else grid

    base, pairs = additive_null_grams(x1, x2, library)
    fit = fit_null(y, base, criterion=criterion, strategy=strategy, beta=beta, grid=grid)

    if interaction_spec is not None:
        x1s = standardize(x1)
        x2s = standardize(x2)
        fixed_pair = (
            normalize_trace(gram_matrix(interaction_spec, x1s)),
            normalize_trace(gram_matrix(interaction_spec, x2s)),
        )
        dk0 = interaction_matrix([fixed_pair])
    else:
        dk0 = interaction_matrix(pairs, fit.u_hat)

    model = build_null_model(y, fit, dk0)
    t0 = test_statistic(y, model)
    if test_kind == "asym":
        kappa, nu = satterthwaite_null(model)
        return TestResult(
            statistic=t0,
            pvalue=asymptotic_pvalue(t0, kappa, nu),
            method="asym",
            kappa_hat=kappa,
            nu_hat=nu,
            seed=seed,
            fit=fit,
        )
    pvalue, _ = bootstrap_pvalue(y, model, b=b, seed=seed, correction=boot_correction)
    return TestResult(statistic=t0, pvalue=pvalue, method="boot", b=b, seed=seed, fit=fit)

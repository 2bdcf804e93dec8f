"""Kernel families, Gram matrices, and feature standardization.

Seven kernel families share one declarative description, :class:`KernelSpec`:
constant (``intercept``), ``linear``, ``polynomial``, Gaussian ``rbf``,
``matern`` at half-integer orders, ``rational`` quadratic, and the arcsine
``nn`` kernel on augmented inputs.  Gram matrices built from a spec feed the
ridge smoother, the kernel ensemble, and the interaction test.  Helpers for
trace normalization, Hadamard (interaction) products, and column
standardization live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError

FAMILIES = ("intercept", "linear", "polynomial", "rbf", "matern", "rational", "nn")

MATERN_ORDERS = (0.5, 1.5, 2.5)

# Hyperparameters each family actually reads.  Extra values on a spec are
# ignored, not rejected, so one parameter table can describe a whole library.
FAMILY_PARAMS = {
    "intercept": (),
    "linear": (),
    "polynomial": ("p",),
    "rbf": ("l",),
    "matern": ("l", "nu"),
    "rational": ("l", "alpha"),
    "nn": (),
}

_NU_ALIASES = {"1/2": 0.5, "3/2": 1.5, "5/2": 2.5, "0.5": 0.5, "1.5": 1.5, "2.5": 2.5}


@dataclass(frozen=True)
class KernelSpec:
    """One kernel family plus its hyperparameters.

    Parameters irrelevant to the family keep their defaults and are never
    consulted, so e.g. ``KernelSpec("rbf", l=2.0)`` and
    ``KernelSpec("rbf", l=2.0, p=7)`` evaluate identically.
    """

    family: str
    l: float = 1.0
    p: int = 2
    nu: float = 1.5
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {', '.join(FAMILIES)}"
            )
        if self.family in ("rbf", "matern", "rational") and not self.l > 0:
            raise ValueError(f"{self.family} kernel requires length-scale l > 0, got l={self.l}")
        if self.family == "rational" and not self.alpha > 0:
            raise ValueError(f"rational kernel requires alpha > 0, got alpha={self.alpha}")
        if self.family == "polynomial":
            if int(self.p) != self.p or self.p < 0:
                raise ValueError(f"polynomial kernel requires integer degree p >= 0, got p={self.p}")
        if self.family == "matern" and self.nu not in MATERN_ORDERS:
            raise ValueError(
                f"matern kernel supports nu in {MATERN_ORDERS}, got nu={self.nu}"
            )

    def label(self) -> str:
        """Short human-readable tag, e.g. ``rbf(l=0.6)``."""
        parts = []
        for name in FAMILY_PARAMS[self.family]:
            value = getattr(self, name)
            parts.append(f"{name}={value:g}")
        inner = ", ".join(parts)
        return f"{self.family}({inner})" if inner else self.family


def spec_from_dict(entry: dict) -> KernelSpec:
    """Build a :class:`KernelSpec` from a config mapping.

    Accepts ``nu`` either as a number or as one of the strings
    ``"1/2"``, ``"3/2"``, ``"5/2"``.
    """
    entry = dict(entry)
    try:
        family = entry.pop("family")
    except KeyError:
        raise ValueError(f"kernel entry {entry!r} is missing the 'family' key") from None
    kwargs = {}
    for name in ("l", "p", "nu", "alpha"):
        if name in entry:
            value = entry.pop(name)
            if name == "nu" and isinstance(value, str):
                if value not in _NU_ALIASES:
                    raise ValueError(f"unrecognized matern order {value!r}")
                value = _NU_ALIASES[value]
            kwargs[name] = value
    if entry:
        raise ValueError(f"unrecognized kernel parameters {sorted(entry)} for family {family!r}")
    return KernelSpec(family, **kwargs)


@dataclass
class FeatureMatrix:
    """An n x p design block with column names and a standardization flag."""

    values: np.ndarray
    column_names: list[str] = field(default_factory=list)
    standardized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if not self.column_names:
            self.column_names = [f"x{j}" for j in range(self.values.shape[1])]


@dataclass
class GramMatrix:
    """An n x n symmetric PSD kernel matrix with provenance."""

    values: np.ndarray
    source_spec: KernelSpec | None = None
    trace_normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def check(self, psd_tol: float = 1e-8) -> None:
        """Raise if the matrix is visibly non-symmetric or indefinite."""
        k = self.values
        scale = max(np.abs(k).max(), 1.0)
        if np.abs(k - k.T).max() > 1e-12 * scale:
            raise NumericalError("Gram matrix is not symmetric")
        trace = np.trace(k)
        min_eig = np.linalg.eigvalsh(k)[0]
        if min_eig < -psd_tol * max(trace, 1.0):
            raise NumericalError(
                f"Gram matrix is not PSD (min eigenvalue {min_eig:.3e}, trace {trace:.3e})"
            )


def as_gram_array(gram) -> np.ndarray:
    """Accept a GramMatrix or a plain array and return the ndarray view."""
    if isinstance(gram, GramMatrix):
        return gram.values
    return np.asarray(gram, dtype=float)


def _kernel_block(spec: KernelSpec, inner, sq_dist, self1, self2) -> np.ndarray:
    """Evaluate one family from pairwise inner products / squared distances.

    ``inner[i, j] = <x_i, x2_j>``, ``sq_dist[i, j] = |x_i - x2_j|^2``, and
    ``self1``/``self2`` hold the squared norms of the left/right points.
    """
    fam = spec.family
    if fam == "intercept":
        return np.ones_like(inner)
    if fam == "linear":
        return inner.copy()
    if fam == "polynomial":
        return (1.0 + inner) ** int(spec.p)
    if fam == "nn":
        # augmented inputs (1, x): inner product gains +1, norms gain +1
        num = 2.0 * (1.0 + inner)
        den = np.sqrt(np.outer(1.0 + 2.0 * (1.0 + self1), 1.0 + 2.0 * (1.0 + self2)))
        return (2.0 / math.pi) * np.arcsin(np.clip(num / den, -1.0, 1.0))
    sq = np.clip(sq_dist, 0.0, None)
    if fam == "rbf":
        return np.exp(-sq / (2.0 * spec.l**2))
    if fam == "rational":
        return (1.0 + sq / (2.0 * spec.alpha * spec.l**2)) ** (-spec.alpha)
    if fam == "matern":
        r = np.sqrt(sq) / spec.l
        if spec.nu == 0.5:
            return np.exp(-r)
        if spec.nu == 1.5:
            t = math.sqrt(3.0) * r
            return (1.0 + t) * np.exp(-t)
        t = math.sqrt(5.0) * r
        return (1.0 + t + (5.0 / 3.0) * r**2) * np.exp(-t)
    raise ValueError(f"unknown kernel family {fam!r}")  # unreachable after __post_init__


def eval_kernel(spec: KernelSpec, x, x2) -> float:
    """Evaluate ``k(x, x2)`` for a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ValueError(f"point dimensions differ: {x.shape[0]} vs {x2.shape[0]}")
    inner = np.array([[float(x @ x2)]])
    diff = x - x2
    sq = np.array([[float(diff @ diff)]])
    s1 = np.array([float(x @ x)])
    s2 = np.array([float(x2 @ x2)])
    return float(_kernel_block(spec, inner, sq, s1, s2)[0, 0])


def gram_matrix(spec: KernelSpec, x) -> GramMatrix:
    """Pairwise kernel matrix of one feature block.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric.  ``x`` may be a :class:`FeatureMatrix` or a raw array.
    """
    values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.size == 0:
        raise ValueError("cannot build a Gram matrix from an empty feature block")
    inner = values @ values.T
    norms = np.diag(inner).copy()
    sq = norms[:, None] + norms[None, :] - 2.0 * inner
    k = _kernel_block(spec, inner, sq, norms, norms)
    upper = np.triu(k)
    k = upper + np.triu(k, 1).T
    return GramMatrix(k, source_spec=spec, trace_normalized=False)


def normalize_trace(gram) -> GramMatrix:
    """Rescale a Gram matrix to unit trace."""
    values = as_gram_array(gram)
    trace = float(np.trace(values))
    if not trace > 0:
        raise NumericalError(f"cannot trace-normalize a kernel matrix with trace {trace:.3e}")
    spec = gram.source_spec if isinstance(gram, GramMatrix) else None
    return GramMatrix(values / trace, source_spec=spec, trace_normalized=True)


def interaction_gram(gram1, gram2) -> GramMatrix:
    """Hadamard product of two Gram matrices (the tensor-product kernel).

    PSD-ness of the elementwise product follows from the Schur product
    theorem; it is checked numerically before returning.
    """
    k1 = as_gram_array(gram1)
    k2 = as_gram_array(gram2)
    if k1.shape != k2.shape:
        raise ValueError(f"Gram dimensions differ: {k1.shape} vs {k2.shape}")
    out = GramMatrix(k1 * k2, source_spec=None, trace_normalized=False)
    out.check()
    return out


def standardize(x, column_names: list[str] | None = None) -> FeatureMatrix:
    """Center columns to mean zero and scale to unit sample SD (ddof=1).

    Raises :class:`DataError` on a constant column.  Applying it to an
    already standardized block is a no-op up to rounding.
    """
    values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    if n < 2:
        raise DataError(f"standardization requires at least 2 rows, got {n}")
    if column_names is None:
        column_names = x.column_names if isinstance(x, FeatureMatrix) else None
    centered = values - values.mean(axis=0)
    sd = centered.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd == 0)
    if bad.size:
        names = column_names or [f"x{j}" for j in range(values.shape[1])]
        raise DataError(f"constant column cannot be standardized: {names[bad[0]]}")
    return FeatureMatrix(centered / sd, column_names=list(column_names or []), standardized=True)

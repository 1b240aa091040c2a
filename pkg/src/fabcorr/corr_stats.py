"""Correlation and Fisher-z statistics, the classical two-sided test, and Phi.

Pairs of variables ``(w, v)`` with ``w < v`` are flattened to a single index
``j`` in row-major upper-triangle order, which is the order produced by
``numpy.triu_indices(q, k=1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

from .exceptions import DegenerateInputError

#: Sample correlations are clipped to this distance from +-1 before transforming.
RHO_CLAMP = 1e-12

MIN_SAMPLES = 4


class PairIndex(NamedTuple):
    j: int
    w: int
    v: int


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x q`` sample matrix with column labels.

    Construction validates the invariants the statistics rely on: at least
    four rows, finite entries and no constant column.
    """

    values: np.ndarray
    column_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DegenerateInputError(f"expected a 2-D matrix, got shape {values.shape}")
        labels = tuple(str(x) for x in self.column_labels) or tuple(
            f"V{i}" for i in range(values.shape[1])
        )
        if len(labels) != values.shape[1]:
            raise DegenerateInputError(
                f"{len(labels)} column labels for {values.shape[1]} columns"
            )
        if len(set(labels)) != len(labels):
            raise DegenerateInputError("column labels must be unique")
        if values.shape[0] < MIN_SAMPLES:
            raise DegenerateInputError(
                f"need at least {MIN_SAMPLES} rows, got {values.shape[0]}"
            )
        if not np.all(np.isfinite(values)):
            raise DegenerateInputError("data contains non-finite values")
        _check_column_variance(values, labels)
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ZStatistics:
    """Fisher-transformed sample correlations for every pair, flattened."""

    z_hat: np.ndarray
    q: int
    n_eff: int

    @property
    def p(self) -> int:
        return self.z_hat.shape[0]

    def pairs(self) -> list[PairIndex]:
        w, v = np.triu_indices(self.q, k=1)
        return [PairIndex(j, int(a), int(b)) for j, (a, b) in enumerate(zip(w, v))]


def constant_columns(values: np.ndarray) -> np.ndarray:
    """Boolean mask of columns whose centered sum of squares is at rounding level."""
    centered = values - values.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    scale = np.maximum(np.abs(values).max(axis=0), 1.0)
    return ss <= (1e-14 * scale) ** 2 * values.shape[0]


def _check_column_variance(values: np.ndarray, labels: Sequence[str]) -> None:
    bad = np.flatnonzero(constant_columns(values))
    if bad.size:
        names = ", ".join(labels[i] for i in bad)
        raise DegenerateInputError(f"zero-variance column(s): {names}")


# -- pair indexing ----------------------------------------------------------


def n_pairs(q: int) -> int:
    return q * (q - 1) // 2


def pair_to_index(w: int, v: int, q: int) -> int:
    """Flat index of pair ``(w, v)``; the order of ``w`` and ``v`` does not matter."""
    if w == v:
        raise ValueError("a pair needs two distinct variables")
    if w > v:
        w, v = v, w
    if w < 0 or v >= q:
        raise IndexError(f"pair ({w}, {v}) out of range for q={q}")
    return w * q - w * (w + 1) // 2 + (v - w - 1)


def index_to_pair(j: int, q: int) -> PairIndex:
    p = n_pairs(q)
    if not 0 <= j < p:
        raise IndexError(f"pair index {j} out of range for q={q}")
    # Row w starts at offset w*q - w*(w+1)/2; walk rows (q is small).
    w = 0
    start = 0
    while start + (q - w - 1) <= j:
        start += q - w - 1
        w += 1
    return PairIndex(j, w, w + 1 + (j - start))


def pair_arrays(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(w, v)`` for all pairs in flat-index order."""
    return np.triu_indices(q, k=1)


# -- statistics ---------------------------------------------------------------


def pearson_correlation_matrix(data: DataMatrix | np.ndarray) -> np.ndarray:
    """Sample Pearson correlation matrix, computed with a centered two-pass scheme."""
    if isinstance(data, DataMatrix):
        x, labels = data.values, data.column_labels
    else:
        x = np.asarray(data, dtype=float)
        labels = tuple(f"V{i}" for i in range(x.shape[1]))
        _check_column_variance(x, labels)
    centered = x - x.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    scaled = centered / norms
    corr = scaled.T @ scaled
    corr = 0.5 * (corr + corr.T)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def fisher_transform(rho):
    """Fisher's z: ``0.5 * log((1 + rho) / (1 - rho))``.

    Values within ``RHO_CLAMP`` of +-1 (including +-1 itself) are clamped so the
    result is finite. NaN or ``|rho| > 1`` raises ``ValueError``.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(np.isnan(r)):
        raise ValueError("fisher_transform received NaN")
    if np.any(np.abs(r) > 1.0 + 1e-9):
        raise ValueError("correlations must lie in [-1, 1]")
    r = np.clip(r, -1.0 + RHO_CLAMP, 1.0 - RHO_CLAMP)
    out = np.arctanh(r)
    return float(out) if out.ndim == 0 else out


def z_statistics(data: DataMatrix) -> ZStatistics:
    corr = pearson_correlation_matrix(data)
    w, v = pair_arrays(data.q)
    return ZStatistics(fisher_transform(corr[w, v]), data.q, data.n)


def t_statistic(rho_hat: float, n: int) -> float:
    """Student-t statistic for a sample correlation (diagnostic only)."""
    if n < 3:
        raise ValueError("t statistic needs n >= 3")
    if abs(rho_hat) >= 1.0:
        raise DegenerateInputError("t statistic is infinite for |rho_hat| = 1")
    return rho_hat * np.sqrt((n - 2) / (1.0 - rho_hat * rho_hat))


def standard_normal_cdf(x):
    """Standard normal CDF, accurate to double precision in both tails."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def standardize(z_hat, n: int):
    """Scale Fisher-z statistics to unit null variance: ``z_hat * sqrt(n - 3)``."""
    if n < MIN_SAMPLES:
        raise ValueError(f"n must be at least {MIN_SAMPLES}")
    return np.asarray(z_hat, dtype=float) * np.sqrt(n - 3.0)


def umpu_p_value(z_hat, n: int):
    """Two-sided normal p-value ``1 - |Phi(s) - Phi(-s)|`` with ``s = z_hat*sqrt(n-3)``."""
    s = standardize(z_hat, n)
    # 1 - |Phi(s) - Phi(-s)| == 2*Phi(-|s|), which keeps tail precision.
    out = 2.0 * special.ndtr(-np.abs(s))
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out

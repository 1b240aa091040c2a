"""Correlation matrix of the Fisher-z statistics: identity blocks or bootstrap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corr_stats import DataMatrix, RHO_CLAMP
from ..exceptions import ConfigError, DegenerateInputError, NumericalError
from ..rng import substream

MIN_EIGENVALUE = 1e-8
SHRINKAGE_LEVELS = (1e-6, 1e-4, 1e-2)
MAX_REDRAWS = 10
MIN_RESAMPLES = 50
# elements per bootstrap chunk (resamples x rows x pairs)
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class OmegaEstimate:
    matrix: np.ndarray
    source: str
    B: int | None = None
    shrinkage: float = 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def identity_omega(p: int) -> OmegaEstimate:
    return OmegaEstimate(np.eye(p), "identity_block")


def regularize_omega(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Shrink toward the identity by the smallest listed amount that makes ``matrix`` PD.

    Returns the (possibly unchanged) matrix and the shrinkage used.
    """
    matrix = 0.5 * (matrix + matrix.T)
    if np.linalg.eigvalsh(matrix)[0] >= MIN_EIGENVALUE:
        return matrix, 0.0
    eye = np.eye(matrix.shape[0])
    for gamma in SHRINKAGE_LEVELS:
        shrunk = (1.0 - gamma) * matrix + gamma * eye
        if np.linalg.eigvalsh(shrunk)[0] >= MIN_EIGENVALUE:
            np.fill_diagonal(shrunk, 1.0)
            return shrunk, gamma
    raise NumericalError("could not regularize Omega to positive definite")


def _as_pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.array([(p[-2], p[-1]) for p in pairs], dtype=int).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def bootstrap_z(data: DataMatrix, pairs: Sequence, B: int,
                rng: np.random.Generator) -> np.ndarray:
    """Fisher-z statistics of ``pairs`` recomputed on ``B`` row resamples; shape ``(B, len(pairs))``.

    ``pairs`` holds ``(w, v)`` tuples or ``PairIndex`` records. A resample
    that leaves a needed column constant is redrawn, at most ``MAX_REDRAWS``
    times per resample.
    """
    w, v = _as_pair_arrays(pairs)
    cols, inv = np.unique(np.concatenate([w, v]), return_inverse=True)
    lw, lv = inv[: len(w)], inv[len(w):]
    x = data.values[:, cols]
    n = data.n

    idx = rng.integers(0, n, size=(B, n))
    z = np.empty((B, len(w)))
    chunk = max(1, _CHUNK_ELEMENTS // (n * max(len(w), len(cols))))
    for start in range(0, B, chunk):
        stop = min(start + chunk, B)
        z[start:stop], bad = _resample_z(x, idx[start:stop], lw, lv)
        for b in np.flatnonzero(bad) + start:
            for _ in range(MAX_REDRAWS):
                idx[b] = rng.integers(0, n, size=n)
                zb, badb = _resample_z(x, idx[b:b + 1], lw, lv)
                if not badb[0]:
                    z[b] = zb[0]
                    break
            else:
                raise DegenerateInputError(
                    f"resample {b} kept producing a constant column after {MAX_REDRAWS} redraws"
                )
    return z


def _resample_z(x, idx, lw, lv):
    xb = x[idx]                                   # (b, n, c)
    xb = xb - xb.mean(axis=1, keepdims=True)
    ss = np.einsum("bnc,bnc->bc", xb, xb)
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    flat = ss <= (1e-14 * scale) ** 2 * x.shape[0]
    bad = flat[:, lw].any(axis=1) | flat[:, lv].any(axis=1)
    ss = np.where(flat, 1.0, ss)
    cross = np.einsum("bnp,bnp->bp", xb[:, :, lw], xb[:, :, lv])
    r = cross / np.sqrt(ss[:, lw] * ss[:, lv])
    r = np.clip(r, -1.0 + RHO_CLAMP, 1.0 - RHO_CLAMP)
    return np.arctanh(r), bad


def bootstrap_omega(data: DataMatrix, pairs: Sequence, B: int, seed: int = 0, *,
                    rng: np.random.Generator | None = None,
                    regularize: bool = True) -> OmegaEstimate:
    """Bootstrap estimate of the correlation matrix of the Fisher-z statistics of ``pairs``.

    Rows are resampled with replacement ``B`` times; the estimate is the
    sample correlation of the ``B`` recomputed z-vectors, shrunk toward the
    identity if it is not numerically positive definite.
    """
    if B < MIN_RESAMPLES:
        raise ConfigError(f"need at least {MIN_RESAMPLES} bootstrap resamples, got {B}")
    if len(pairs) < 2:
        raise ConfigError("bootstrap Omega needs at least two pairs")
    if rng is None:
        rng = substream(seed)
    z = bootstrap_z(data, pairs, B, rng)
    zc = z - z.mean(axis=0)
    sd = np.sqrt(np.einsum("bp,bp->p", zc, zc))
    if np.any(sd <= 1e-12 * np.maximum(np.abs(z).max(axis=0), 1.0) * np.sqrt(B)):
        raise NumericalError("a bootstrapped statistic did not vary across resamples")
    u = zc / sd
    omega = u.T @ u
    omega = 0.5 * (omega + omega.T)
    np.clip(omega, -1.0, 1.0, out=omega)
    np.fill_diagonal(omega, 1.0)
    gamma = 0.0
    if regularize:
        omega, gamma = regularize_omega(omega)
    return OmegaEstimate(omega, "bootstrap", B=B, shrinkage=gamma)

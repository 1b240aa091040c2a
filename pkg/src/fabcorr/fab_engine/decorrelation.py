from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import NumericalError


@dataclass(frozen=True)
class DecorrelationBasis:
    """Orthonormal basis ``G`` of the complement of ``Omega[:, tested_index]``."""

    G: np.ndarray
    tested_index: int


def _orient(G: np.ndarray) -> np.ndarray:
    # first entry above noise level in each column made positive
    tol = 1e-12
    for k in range(G.shape[1]):
        col = G[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            G[:, k] = -col
    return G


def build_decorrelation(omega, j: int) -> DecorrelationBasis:
    """Decorrelation basis for coordinate ``j`` of ``omega``.

    The columns span the null space of ``omega[:, j]^T``; they come from a
    complete QR factorization of that column, with each column's first
    nonzero entry made positive.
    """
    omega = np.asarray(omega, dtype=float)
    p = omega.shape[0]
    if not 0 <= j < p:
        raise IndexError(f"coordinate {j} out of range for dimension {p}")
    c = omega[:, j]
    norm = np.linalg.norm(c)
    if not np.isfinite(norm) or norm == 0.0:
        raise NumericalError(f"column {j} of Omega is zero or non-finite")
    if p == 1:
        return DecorrelationBasis(np.zeros((1, 0)), j)
    Q, _ = np.linalg.qr((c / norm)[:, None], mode="complete")
    G = _orient(np.array(Q[:, 1:]))
    if np.abs(G.T @ G - np.eye(p - 1)).max() > 1e-10 or np.abs(G.T @ c).max() > 1e-8 * max(norm, 1.0):
        raise NumericalError("decorrelation basis lost orthogonality")
    return DecorrelationBasis(G, j)


def deletion_basis(p: int, j: int) -> DecorrelationBasis:
    """Identity with column ``j`` removed: the basis for a block-diagonal ``Omega`` with ``Omega[:, j] = e_j``."""
    return DecorrelationBasis(np.delete(np.eye(p), j, axis=1), j)

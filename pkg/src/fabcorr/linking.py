"""Linking model ``z ~ N(W eta, Psi)`` and its empirical-Bayes fit.

The sampling covariance of a group of Fisher-z statistics is
``S = D^(1/2) Omega D^(1/2)`` with ``D = diag(1 / (n_i - 3))``; a scalar
``n_eff`` gives the familiar ``Omega / (n - 3)``. Indirect information is
``y = G^T z_hat`` for a decorrelation basis ``G``, so marginally

    y ~ N(G^T W eta, G^T S G + psi^2 I)

when ``G`` has orthonormal columns and ``Psi = psi^2 I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ConfigError, EstimationError, NumericalError

DesignKind = Literal["ones", "external_linear", "external_poly", "custom"]

PSI_SQ_MAX = 10.0
PSI_SQ_FLOOR = 1e-8
GOLDEN_TOL = 1e-8
GOLDEN_MAX_ITER = 200
_GRID = np.concatenate([[0.0], np.logspace(-8, np.log10(PSI_SQ_MAX), 46)])
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LinkingDesign:
    """How the design matrix ``W`` of a group is built.

    ``custom`` takes its rows from ``custom_rows`` (one row per test, indexed
    by flat pair index); the other kinds are built from external statistics.
    """

    kind: DesignKind = "ones"
    include_intercept: bool = False
    degree: int = 1
    ridge_lambda: float = 0.0
    custom_rows: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("ones", "external_linear", "external_poly", "custom"):
            raise ConfigError(f"unknown design kind {self.kind!r}")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be nonnegative")
        if self.kind == "external_poly" and self.degree < 1:
            raise ConfigError("polynomial design needs degree >= 1")
        if self.kind == "custom" and self.custom_rows is None:
            raise ConfigError("custom design needs custom_rows")

    @property
    def needs_external(self) -> bool:
        return self.kind in ("external_linear", "external_poly")

    @classmethod
    def parse(cls, text: str, ridge_lambda: float = 0.0) -> "LinkingDesign":
        """Parse the CLI grammar ``ones | linear | linear-intercept | poly:D``."""
        if text == "ones":
            return cls("ones", ridge_lambda=ridge_lambda)
        if text == "linear":
            return cls("external_linear", ridge_lambda=ridge_lambda)
        if text == "linear-intercept":
            return cls("external_linear", include_intercept=True, ridge_lambda=ridge_lambda)
        if text.startswith("poly:"):
            try:
                degree = int(text[5:])
            except ValueError:
                raise ConfigError(f"bad polynomial degree in {text!r}") from None
            return cls("external_poly", degree=degree, ridge_lambda=ridge_lambda)
        raise ConfigError(f"unknown design {text!r}")

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "include_intercept": self.include_intercept,
            "degree": self.degree,
            "ridge_lambda": self.ridge_lambda,
        }


@dataclass(frozen=True)
class LinkingModel:
    W: np.ndarray
    eta: np.ndarray
    psi_sq: float

    @property
    def group_size(self) -> int:
        return self.W.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.W @ self.eta

    @property
    def Psi(self) -> np.ndarray:
        return self.psi_sq * np.eye(self.group_size)


@dataclass(frozen=True)
class PosteriorSummary:
    m: np.ndarray
    V: np.ndarray
    m_j: float
    v_j: float


def build_design(design: LinkingDesign, external_stats=None, size: int | None = None,
                 rows: np.ndarray | None = None) -> np.ndarray:
    """Design matrix for one group.

    ``external_stats`` are the group's external Fisher-z values. ``size`` is
    only needed for the ``ones`` kind when no statistics are passed. For the
    ``custom`` kind, ``rows`` selects rows of ``design.custom_rows``.
    """
    if design.kind == "custom":
        custom = np.asarray(design.custom_rows, dtype=float)
        if custom.ndim == 1:
            custom = custom[:, None]
        return custom if rows is None else custom[np.asarray(rows)]
    if design.kind == "ones":
        if size is None:
            if external_stats is None:
                raise ConfigError("ones design needs a group size")
            size = len(external_stats)
        return np.ones((size, 1))
    if external_stats is None:
        raise ConfigError(f"{design.kind} design requires external statistics")
    ext = np.asarray(external_stats, dtype=float).ravel()
    if design.kind == "external_linear":
        if design.include_intercept:
            return np.column_stack([np.ones_like(ext), ext])
        return ext[:, None].copy()
    return np.vander(ext, design.degree + 1, increasing=True)


def sampling_covariance(omega, n_eff) -> np.ndarray:
    """``Omega`` scaled by ``1/(n_i - 3)``; ``n_eff`` is a scalar or one count per coordinate."""
    omega = np.asarray(omega, dtype=float)
    n = np.broadcast_to(np.asarray(n_eff, dtype=float), omega.shape[:1])
    if np.any(n <= 3):
        raise ConfigError("every sample size must exceed 3")
    scale = 1.0 / np.sqrt(n - 3.0)
    return omega * np.outer(scale, scale)


# -- empirical Bayes fit ---------------------------------------------------


class _Profile:
    """Profile negative log-likelihood of ``psi^2`` in the eigenbasis of ``G^T S G``."""

    def __init__(self, y, X, lam, ridge):
        self.y = y
        self.X = X
        self.lam = lam
        self.ridge = ridge
        self.d = X.shape[1]

    def eta(self, psi_sq):
        psi_sq = np.atleast_1d(psi_sq)
        w = 1.0 / (self.lam[None, :] + psi_sq[:, None])
        XtWX = np.einsum("ri,gr,rk->gik", self.X, w, self.X)
        XtWy = np.einsum("ri,gr,r->gi", self.X, w, self.y)
        if self.ridge > 0:
            XtWX = XtWX + 2.0 * self.ridge * np.eye(self.d)
        try:
            return np.linalg.solve(XtWX, XtWy[..., None])[..., 0], w
        except np.linalg.LinAlgError:
            return np.einsum("gik,gk->gi", np.linalg.pinv(XtWX), XtWy), w

    def __call__(self, psi_sq):
        eta, w = self.eta(psi_sq)
        resid = self.y[None, :] - eta @ self.X.T
        nll = 0.5 * (np.log(1.0 / w).sum(axis=1) + (w * resid * resid).sum(axis=1))
        if self.ridge > 0:
            nll = nll + self.ridge * (eta * eta).sum(axis=1)
        return nll


def _golden(f, a, b, tol=GOLDEN_TOL, max_iter=GOLDEN_MAX_ITER):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for it in range(max_iter):
        if b - a <= tol:
            x = 0.5 * (a + b)
            return x, it
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    raise EstimationError(
        "golden-section search for psi^2 did not converge",
        {"bracket": (a, b), "iterations": max_iter, "tol": tol},
    )


def estimate_eta_psi(indirect, G, W, omega, n_eff, ridge_lambda: float = 0.0,
                     *, fixed_psi_sq: float | None = None) -> tuple[np.ndarray, float]:
    """Empirical-Bayes estimates of ``(eta, psi^2)`` from indirect information.

    ``eta`` maximizes the Gaussian marginal likelihood of ``indirect`` (minus
    ``ridge_lambda * ||eta||^2``) for each ``psi^2``; ``psi^2`` is then chosen
    on ``[0, PSI_SQ_MAX]`` by a log-grid scan refined with golden-section
    search. Pass ``fixed_psi_sq`` to skip the search.
    """
    y = np.asarray(indirect, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    W = np.asarray(W, dtype=float)
    A = G.T @ sampling_covariance(omega, n_eff) @ G
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    lam = np.maximum(lam, 1e-14 * max(lam.max(), 1e-300))
    profile = _Profile(Q.T @ y, Q.T @ (G.T @ W), lam, ridge_lambda)

    if fixed_psi_sq is not None:
        psi_sq = float(fixed_psi_sq)
    else:
        nll = profile(_GRID)
        i = int(np.argmin(nll))
        lo = _GRID[max(i - 1, 0)]
        hi = _GRID[min(i + 1, len(_GRID) - 1)]
        x, _ = _golden(lambda t: float(profile(t)[0]), lo, hi)
        psi_sq = x if profile(x)[0] <= nll[i] else float(_GRID[i])
    eta, _ = profile.eta(psi_sq)
    return eta[0], psi_sq


# -- posterior ----------------------------------------------------------------


def posterior_given_indirect(z_hat, G, eta, psi_sq, W, omega, n_eff, j: int = 0
                             ) -> PosteriorSummary:
    """Posterior of the true z-vector given ``G^T z_hat`` and the fitted prior.

    Uses the information form
    ``V = [Psi^-1 + G (G^T S G)^-1 G^T]^-1`` and
    ``m = V [Psi^-1 W eta + G (G^T S G)^-1 G^T z_hat]``.
    ``psi_sq`` may be a scalar (isotropic prior, floored at ``PSI_SQ_FLOOR``)
    or a full covariance matrix.
    """
    z_hat = np.asarray(z_hat, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    p = z_hat.shape[0]
    prior_mean = np.asarray(W, dtype=float) @ np.atleast_1d(np.asarray(eta, dtype=float))

    psi = np.asarray(psi_sq, dtype=float)
    if psi.ndim == 0:
        prior_prec = np.eye(p) / max(float(psi), PSI_SQ_FLOOR)
    else:
        try:
            prior_prec = np.linalg.inv(psi)
        except np.linalg.LinAlgError:
            raise NumericalError("prior covariance Psi is singular") from None

    if G.shape[1] == 0:
        lik_prec = np.zeros((p, p))
        lik_shift = np.zeros(p)
    else:
        inner = G.T @ sampling_covariance(omega, n_eff) @ G
        try:
            factor = cho_factor(inner, lower=True)
        except LinAlgError:
            raise NumericalError(
                "G^T Omega G is singular; regularize the Omega estimate"
            ) from None
        lik_prec = G @ cho_solve(factor, G.T)
        lik_shift = G @ cho_solve(factor, G.T @ z_hat)

    prec = prior_prec + lik_prec
    prec = 0.5 * (prec + prec.T)
    try:
        factor = cho_factor(prec, lower=True)
    except LinAlgError:
        raise NumericalError("posterior precision is not positive definite") from None
    V = cho_solve(factor, np.eye(p))
    V = 0.5 * (V + V.T)
    m = V @ (prior_prec @ prior_mean + lik_shift)
    return PosteriorSummary(m=m, V=V, m_j=float(m[j]), v_j=float(V[j, j]))


"""Rejection rules over p-value vectors and their evaluation against truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class DecisionSet:
    rejected: np.ndarray
    procedure: str
    level: float
    threshold_used: float


@dataclass(frozen=True)
class EvaluationReport:
    """Confusion rates, one row per truth class.

    ``power`` is ``None`` when there are no alternatives and ``type1`` is
    ``None`` when there are no nulls.
    """

    n_null: int
    n_alt: int
    null_reject: int
    alt_reject: int
    power: float | None
    type1: float | None
    observed_fdr: float

    @property
    def confusion(self) -> dict:
        def row(rejects, total):
            if total == 0:
                return {"reject": None, "not_reject": None}
            rate = rejects / total
            return {"reject": rate, "not_reject": 1.0 - rate}

        return {"null": row(self.null_reject, self.n_null),
                "alternative": row(self.alt_reject, self.n_alt)}


def _check_p(p_values) -> np.ndarray:
    p = np.asarray(p_values, dtype=float).ravel()
    if np.any(np.isnan(p)):
        raise ValueError("p-values contain NaN")
    return p


def reject_fixed(p_values, alpha: float) -> DecisionSet:
    """Reject every hypothesis with ``p < alpha`` (strict)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    p = _check_p(p_values)
    return DecisionSet(p < alpha, "fixed_alpha", alpha, alpha)


def reject_bh(p_values, q_target: float) -> DecisionSet:
    """Benjamini-Hochberg step-up at level ``q_target``.

    Finds the largest ``k`` with ``p_(k) <= k * q / m`` and rejects every
    p-value ``<= p_(k)``.
    """
    if not 0.0 < q_target < 1.0:
        raise ConfigError("q_target must be in (0, 1)")
    p = _check_p(p_values)
    m = p.size
    rejected = np.zeros(m, dtype=bool)
    if m == 0:
        return DecisionSet(rejected, "bh", q_target, 0.0)
    sorted_p = np.sort(p)
    passing = np.flatnonzero(sorted_p <= q_target * np.arange(1, m + 1) / m)
    if passing.size == 0:
        return DecisionSet(rejected, "bh", q_target, 0.0)
    k = passing[-1] + 1
    cutoff = sorted_p[k - 1]
    return DecisionSet(p <= cutoff, "bh", q_target, k * q_target / m)


def evaluate(decisions: DecisionSet, truth) -> EvaluationReport:
    """Compare rejections with a boolean vector marking the true alternatives."""
    truth = np.asarray(truth, dtype=bool).ravel()
    rejected = np.asarray(decisions.rejected, dtype=bool).ravel()
    if truth.shape != rejected.shape:
        raise ValueError(f"length mismatch: {rejected.size} decisions, {truth.size} truth labels")
    n_alt = int(truth.sum())
    n_null = truth.size - n_alt
    alt_rej = int((rejected & truth).sum())
    null_rej = int((rejected & ~truth).sum())
    total = alt_rej + null_rej
    return EvaluationReport(
        n_null=n_null,
        n_alt=n_alt,
        null_reject=null_rej,
        alt_reject=alt_rej,
        power=alt_rej / n_alt if n_alt else None,
        type1=null_rej / n_null if n_null else None,
        observed_fdr=null_rej / total if total else 0.0,
    )

"""Per-test FAB p-values for whole correlation matrices.

Both runners loop over groups; inside a group every test gets its own
decorrelation basis, its own empirical-Bayes fit on the indirect
information, and a posterior for its coordinate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from ..corr_stats import DataMatrix, PairIndex, pair_arrays, umpu_p_value, z_statistics, standardize
from ..exceptions import ConfigError
from ..linking import LinkingDesign, build_design, estimate_eta_psi, posterior_given_indirect
from ..rng import substream
from .decorrelation import build_decorrelation, deletion_basis
from .grouping import GroupAssignment
from .omega import bootstrap_omega
from .pvalues import fab_offset, fab_p_value

MAX_DEFAULT_B = 5000


class BootstrapSizeWarning(UserWarning):
    """Fewer bootstrap resamples than ten per test in a group."""


class InternalOrderingWarning(UserWarning):
    """Groups were formed from the tested statistics themselves."""


@dataclass(frozen=True)
class TestResult:
    pair: PairIndex
    z_hat: float
    p_umpu: float
    p_fab: float
    offset_b: float
    m_j: float
    v_j: float
    group_id: int

    __test__ = False  # not a pytest class


def default_bootstrap_size(groups: GroupAssignment) -> int:
    largest = max(len(g) for g in groups.groups)
    return int(min(100 * largest, MAX_DEFAULT_B))


def as_arrays(results: list[TestResult]) -> dict[str, np.ndarray]:
    """Column arrays of a result list, keyed by field name (pairs split into j, w, v)."""
    out = {
        "j": np.array([r.pair.j for r in results], dtype=int),
        "w": np.array([r.pair.w for r in results], dtype=int),
        "v": np.array([r.pair.v for r in results], dtype=int),
    }
    for name in ("z_hat", "p_umpu", "p_fab", "offset_b", "m_j", "v_j"):
        out[name] = np.array([getattr(r, name) for r in results], dtype=float)
    out["group_id"] = np.array([r.group_id for r in results], dtype=int)
    return out


def _assemble(q, n, z_hat, group_of, outputs):
    w, v = pair_arrays(q)
    p_umpu = umpu_p_value(z_hat, n)
    p = z_hat.shape[0]
    p_fab = p_umpu.copy()
    offset = np.zeros(p)
    m = np.full(p, np.nan)
    var = np.full(p, np.nan)
    for rows in outputs:
        for j, pf, b, mj, vj in rows:
            p_fab[j], offset[j], m[j], var[j] = pf, b, mj, vj
    return [
        TestResult(PairIndex(j, int(w[j]), int(v[j])), float(z_hat[j]), float(p_umpu[j]),
                   float(p_fab[j]), float(offset[j]), float(m[j]), float(var[j]),
                   int(group_of[j]))
        for j in range(p)
    ]


def _check_groups(groups: GroupAssignment, p: int) -> None:
    if groups.p != p:
        raise ConfigError(f"group assignment covers {groups.p} tests, data has {p}")


def _group_design(design: LinkingDesign, idx, ext_z):
    if design.kind == "custom":
        return build_design(design, rows=idx)
    if design.needs_external:
        return build_design(design, ext_z[idx])
    return build_design(design, size=len(idx))


# -- external mode -----------------------------------------------------------


def _align_external(test: DataMatrix, external: DataMatrix) -> DataMatrix:
    if set(test.column_labels) != set(external.column_labels):
        missing = sorted(set(test.column_labels) ^ set(external.column_labels))
        raise ConfigError(f"test and external column labels differ: {missing[:10]}")
    if test.column_labels == external.column_labels:
        return external
    pos = {lab: i for i, lab in enumerate(external.column_labels)}
    order = [pos[lab] for lab in test.column_labels]
    return DataMatrix(external.values[:, order], test.column_labels)


def _external_group(idx, z_test, z_ext, W, n, n_ext, ridge, strict):
    k = len(idx)
    if k == 1:
        return []
    rows = []
    n_vec = np.full(k, float(n if strict else n_ext))
    omega = np.eye(k)
    for t, j in enumerate(idx):
        z_vec = z_ext[idx].copy()
        z_vec[t] = z_test[j]
        n_vec_t = n_vec.copy()
        n_vec_t[t] = n
        G = deletion_basis(k, t).G
        y = G.T @ z_vec
        eta, psi_sq = estimate_eta_psi(y, G, W, omega, n_vec_t, ridge)
        post = posterior_given_indirect(z_vec, G, eta, psi_sq, W, omega, n_vec_t, j=t)
        b = fab_offset(post.m_j, post.v_j, n)
        s = standardize(z_test[j], n)
        rows.append((int(j), fab_p_value(s, b), b, post.m_j, post.v_j))
    return rows


def run_fab_external(test_data: DataMatrix, external_data: DataMatrix,
                     design: LinkingDesign, groups: GroupAssignment, *,
                     strict_paper_scaling: bool = False, n_jobs: int = 1) -> list[TestResult]:
    """FAB tests whose indirect information is an external dataset's statistics.

    For test ``j`` in group ``k`` the indirect vector is the external
    statistics of the other members of ``k``; the sampling correlation is the
    identity. External statistics are scaled by ``1/(n_ext - 3)`` unless
    ``strict_paper_scaling`` is set, in which case ``1/(n - 3)`` is used for
    both datasets.
    """
    external_data = _align_external(test_data, external_data)
    z_test = z_statistics(test_data).z_hat
    z_ext = z_statistics(external_data).z_hat
    _check_groups(groups, z_test.shape[0])
    n, n_ext = test_data.n, external_data.n
    jobs = (
        delayed(_external_group)(g, z_test, z_ext, _group_design(design, g, z_ext), n, n_ext,
                                 design.ridge_lambda, strict_paper_scaling)
        for g in groups.groups
    )
    outputs = Parallel(n_jobs=n_jobs)(jobs) if n_jobs != 1 else [_run(j) for j in jobs]
    return _assemble(test_data.q, n, z_test, groups.group_of(), outputs)


def _run(job):
    fn, args, kwargs = job
    return fn(*args, **kwargs)


# -- bootstrap mode ----------------------------------------------------------


def _bootstrap_group(k, idx, data, z_test, W, B, seed, ridge, pair_w, pair_v):
    size = len(idx)
    if size == 1:
        return []
    pairs = list(zip(pair_w[idx], pair_v[idx]))
    omega = bootstrap_omega(data, pairs, B, rng=substream(seed, k)).matrix
    z_vec = z_test[idx]
    n = data.n
    rows = []
    for t, j in enumerate(idx):
        G = build_decorrelation(omega, t).G
        y = G.T @ z_vec
        eta, psi_sq = estimate_eta_psi(y, G, W, omega, n, ridge)
        post = posterior_given_indirect(z_vec, G, eta, psi_sq, W, omega, n, j=t)
        b = fab_offset(post.m_j, post.v_j, n)
        rows.append((int(j), fab_p_value(standardize(z_test[j], n), b), b, post.m_j, post.v_j))
    return rows


def run_fab_bootstrap(test_data: DataMatrix, design: LinkingDesign, groups: GroupAssignment,
                      B: int | None = None, seed: int = 0, *, external_stats=None,
                      allow_internal_ordering: bool = False, n_jobs: int = 1) -> list[TestResult]:
    """FAB tests borrowing from other statistics of the same dataset.

    Each group's statistic correlation is bootstrapped (stream keyed by
    ``(seed, group id)``), and test ``j`` uses the projection of the group's
    statistics onto the null space of its column of that estimate.
    ``external_stats`` (one value per test) feed external-statistic designs.
    """
    z_test = z_statistics(test_data).z_hat
    p = z_test.shape[0]
    _check_groups(groups, p)
    if groups.ordering_source == "internal_z":
        if not allow_internal_ordering:
            raise ConfigError(
                "groups ordered by the tested statistics; pass allow_internal_ordering=True to accept"
            )
        warnings.warn("groups were ordered by the tested statistics; exact null uniformity "
                      "is not guaranteed", InternalOrderingWarning, stacklevel=2)
    ext = None
    if design.needs_external:
        if external_stats is None:
            raise ConfigError(f"{design.kind} design requires external statistics")
        ext = np.asarray(external_stats, dtype=float).ravel()
        if ext.shape[0] != p:
            raise ConfigError(f"expected {p} external statistics, got {ext.shape[0]}")
    if B is None:
        B = default_bootstrap_size(groups)
    largest = max(len(g) for g in groups.groups)
    if B < 10 * largest:
        warnings.warn(f"B={B} is below 10x the largest group size ({largest})",
                      BootstrapSizeWarning, stacklevel=2)
    pair_w, pair_v = pair_arrays(test_data.q)
    jobs = (
        delayed(_bootstrap_group)(k, g, test_data, z_test, _group_design(design, g, ext), B,
                                  seed, design.ridge_lambda, pair_w, pair_v)
        for k, g in enumerate(groups.groups)
    )
    outputs = Parallel(n_jobs=n_jobs)(jobs) if n_jobs != 1 else [_run(j) for j in jobs]
    return _assemble(test_data.q, test_data.n, z_test, groups.group_of(), outputs)


def run_umpu(test_data: DataMatrix) -> list[TestResult]:
    """Classical tests only: every test is its own group and ``p_fab = p_umpu``."""
    z_test = z_statistics(test_data).z_hat
    return _assemble(test_data.q, test_data.n, z_test, np.arange(z_test.shape[0]), [])

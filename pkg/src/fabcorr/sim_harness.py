"""Synthetic covariance structures, replicate orchestration and summaries.

Covariances are ``U^T U + I`` with ``U`` an ``l x q`` standard-normal matrix
whose entries are masked to zero with a common probability; that probability
is bisected until the off-diagonal zero fraction of the covariance is close to
``mask_target``. Masking reuses one set of uniforms, so the zero fraction is
monotone in the probability.
"""

from __future__ import annotations

import logging
import time
import traceback
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np
from joblib import Parallel, delayed

from .corr_stats import DataMatrix, pair_arrays, z_statistics
from .exceptions import ConfigError
from .fab_engine import (
    as_arrays,
    assign_groups,
    run_fab_bootstrap,
    run_fab_external,
)
from .linking import LinkingDesign
from .multiple_testing import evaluate, reject_bh, reject_fixed
from .rng import derive_seed, substream

logger = logging.getLogger(__name__)

Mode = Literal["external", "bootstrap"]

MASK_TOLERANCE = 0.05
MASK_MAX_ITER = 50
HIST_BINS = 20


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating configuration.

    ``l`` defaults to ``q // 2``. ``mask_prob`` fixes the per-entry masking
    probability and skips the bisection.
    """

    q: int = 50
    l: int | None = None
    mask_target: float = 0.5
    n: int = 100
    n_ext: int = 100
    external_noise_sd: float = 0.5
    seed: int = 0
    mask_prob: float | None = None

    def __post_init__(self):
        if self.l is None:
            object.__setattr__(self, "l", max(1, self.q // 2))
        if self.q < 2:
            raise ConfigError("q must be at least 2")
        if not 1 <= self.l < self.q:
            raise ConfigError(f"need 1 <= l < q, got l={self.l}, q={self.q}")
        if not 0.0 < self.mask_target < 1.0:
            raise ConfigError("mask_target must be in (0, 1)")
        if self.n < 4 or self.n_ext < 4:
            raise ConfigError("n and n_ext must be at least 4")
        if self.external_noise_sd < 0:
            raise ConfigError("external_noise_sd must be nonnegative")
        if self.mask_prob is not None and not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigError("mask_prob must be in [0, 1]")


def _zero_fraction(sigma: np.ndarray) -> float:
    w, v = pair_arrays(sigma.shape[0])
    return float(np.mean(sigma[w, v] == 0.0))


def generate_sigma(config: DgpConfig) -> tuple[np.ndarray, np.ndarray]:
    """Covariance matrix and the boolean matrix of nonzero off-diagonal entries."""
    rng = substream(config.seed, 0)
    U = rng.standard_normal((config.l, config.q))
    uniforms = rng.random((config.l, config.q))

    def build(prob):
        Um = np.where(uniforms < prob, 0.0, U)
        return Um.T @ Um + np.eye(config.q)

    if config.mask_prob is not None:
        sigma = build(config.mask_prob)
    else:
        lo, hi = 0.0, 1.0
        target = config.mask_target
        for _ in range(MASK_MAX_ITER):
            mid = 0.5 * (lo + hi)
            sigma = build(mid)
            frac = _zero_fraction(sigma)
            if abs(frac - target) <= MASK_TOLERANCE:
                break
            if frac < target:
                lo = mid
            else:
                hi = mid
        else:
            raise ConfigError(
                f"mask bisection could not reach zero fraction {target} +- {MASK_TOLERANCE}"
            )
    sigma = 0.5 * (sigma + sigma.T)
    truth = sigma != 0.0
    np.fill_diagonal(truth, False)
    return sigma, truth


def generate_datasets(sigma: np.ndarray, config: DgpConfig) -> tuple[DataMatrix, DataMatrix]:
    """Test and external samples from ``N(mu, sigma)`` with a shared random mean.

    External observations get i.i.d. ``N(0, external_noise_sd^2)`` noise added.
    """
    rng = substream(config.seed, 1)
    q = sigma.shape[0]
    chol = np.linalg.cholesky(sigma)
    mu = rng.standard_normal(q)
    test = mu + rng.standard_normal((config.n, q)) @ chol.T
    ext = mu + rng.standard_normal((config.n_ext, q)) @ chol.T
    ext = ext + config.external_noise_sd * rng.standard_normal(ext.shape)
    labels = tuple(f"V{i}" for i in range(q))
    return DataMatrix(test, labels), DataMatrix(ext, labels)


def truth_vector(truth: np.ndarray) -> np.ndarray:
    """Upper-triangle flattening of the truth matrix (each pair counted once)."""
    w, v = pair_arrays(truth.shape[0])
    return truth[w, v]


# -- a single replicate -------------------------------------------------------


@dataclass(frozen=True)
class PipelineSettings:
    mode: Mode = "external"
    group_size: int = 25
    design: LinkingDesign = field(default_factory=LinkingDesign)
    B: int | None = None
    strict_paper_scaling: bool = False

    def __post_init__(self):
        if self.mode not in ("external", "bootstrap"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.group_size < 1:
            raise ConfigError("group_size must be positive")


def run_replicate(config: DgpConfig, settings: PipelineSettings) -> dict:
    """Generate one dataset pair and return truth plus both p-value vectors."""
    sigma, truth = generate_sigma(config)
    test, ext = generate_datasets(sigma, config)
    z_ext = z_statistics(ext).z_hat
    p = z_ext.shape[0]
    groups = assign_groups(z_ext, min(settings.group_size, p))
    if settings.mode == "external":
        results = run_fab_external(test, ext, settings.design, groups,
                                   strict_paper_scaling=settings.strict_paper_scaling)
    else:
        results = run_fab_bootstrap(test, settings.design, groups, B=settings.B,
                                    seed=derive_seed(config.seed, 2), external_stats=z_ext)
    arrays = as_arrays(results)
    return {
        "truth": truth_vector(truth),
        "p_fab": arrays["p_fab"],
        "p_umpu": arrays["p_umpu"],
        "offset_b": arrays["offset_b"],
    }


# -- grid ------------------------------------------------------------------


@dataclass
class ReplicateSummary:
    """Aggregated rates for one (mode, n, q) cell.

    ``fab`` and ``umpu`` hold mean confusion rates across successful
    replicates; ``relative_gain`` is ``(power_fab - power_umpu) / power_umpu``
    on those means.
    """

    mode: str
    n: int
    q: int
    replicates: int
    alpha: float
    fab: dict
    umpu: dict
    relative_gain: float | None
    power_fab: list[float]
    power_umpu: list[float]
    type1_fab: list[float]
    type1_umpu: list[float]
    n_null: list[int]
    n_alt: list[int]
    histograms: dict
    failures: list[dict] = field(default_factory=list)
    partial: bool = False
    settings: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "q": self.q,
            "replicates": self.replicates,
            "failed": len(self.failures),
            "null_reject_fab": self.fab["null_reject"],
            "alt_reject_fab": self.fab["alt_reject"],
            "null_reject_umpu": self.umpu["null_reject"],
            "alt_reject_umpu": self.umpu["alt_reject"],
            "relative_gain": self.relative_gain,
        }


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _rates(reports) -> dict:
    null_reject = _mean_or_none([r.type1 for r in reports])
    alt_reject = _mean_or_none([r.power for r in reports])
    return {
        "null_reject": null_reject,
        "null_accept": None if null_reject is None else 1.0 - null_reject,
        "alt_reject": alt_reject,
        "alt_accept": None if alt_reject is None else 1.0 - alt_reject,
        "observed_fdr": _mean_or_none([r.observed_fdr for r in reports]),
    }


def _histograms(outputs) -> dict:
    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    hist = {"edges": edges.tolist()}
    for method in ("fab", "umpu"):
        for stratum, want in (("null", False), ("alt", True)):
            pooled = np.concatenate(
                [o[f"p_{method}"][o["truth"] == want] for o in outputs]
            ) if outputs else np.array([])
            hist[f"{method}_{stratum}"] = np.histogram(pooled, bins=edges)[0].tolist()
    return hist


def _safe_replicate(config, settings):
    try:
        return run_replicate(config, settings), None
    except Exception as exc:  # recorded per replicate, cell marked partial
        return None, {"seed": config.seed, "error": repr(exc),
                      "traceback": traceback.format_exc(limit=3)}


def replicate_configs(base: DgpConfig, n: int, q: int, replicates: int, seed: int
                      ) -> list[DgpConfig]:
    """Replicate configs for one grid cell; seeds depend only on ``(seed, n, q, r)``."""
    return [replace(base, n=n, q=q, l=None if base.l is None or base.l >= q else base.l,
                    seed=derive_seed(seed, n, q, r))
            for r in range(replicates)]


def summarize_cell(mode, n, q, alpha, outputs, failures, settings: PipelineSettings,
                   seconds=0.0) -> ReplicateSummary:
    fab_reports, umpu_reports = [], []
    for o in outputs:
        fab_reports.append(evaluate(reject_fixed(o["p_fab"], alpha), o["truth"]))
        umpu_reports.append(evaluate(reject_fixed(o["p_umpu"], alpha), o["truth"]))
    fab, umpu = _rates(fab_reports), _rates(umpu_reports)
    gain = None
    if fab["alt_reject"] is not None and umpu["alt_reject"]:
        gain = (fab["alt_reject"] - umpu["alt_reject"]) / umpu["alt_reject"]
    return ReplicateSummary(
        mode=mode, n=n, q=q, replicates=len(outputs) + len(failures), alpha=alpha,
        fab=fab, umpu=umpu, relative_gain=gain,
        power_fab=[r.power for r in fab_reports],
        power_umpu=[r.power for r in umpu_reports],
        type1_fab=[r.type1 for r in fab_reports],
        type1_umpu=[r.type1 for r in umpu_reports],
        n_null=[int((~o["truth"]).sum()) for o in outputs],
        n_alt=[int(o["truth"].sum()) for o in outputs],
        histograms=_histograms(outputs),
        failures=failures,
        partial=bool(failures),
        settings={"mode": settings.mode, "group_size": settings.group_size,
                  "design": settings.design.describe(), "B": settings.B,
                  "strict_paper_scaling": settings.strict_paper_scaling},
        seconds=seconds,
    )


def run_grid(modes: Iterable[Mode], n_list: Sequence[int], q_list: Sequence[int],
             replicates: int, group_size: int, alpha: float = 0.05, seed: int = 0, *,
             base: DgpConfig | None = None, design: LinkingDesign | None = None,
             B: int | None = None, n_ext: int | None = None, n_jobs: int = 1,
             keep_outputs: bool = False
             ) -> list[ReplicateSummary]:
    """Run every (mode, n, q) cell and summarize it.

    ``base`` supplies the remaining DGP knobs (noise level, masking). The
    external sample size is ``n_ext`` if given, otherwise it follows ``n``.
    Replicate seeds are derived from ``(seed, n, q, replicate)`` so the
    result does not depend on ``n_jobs``.
    """
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    base = base or DgpConfig()
    summaries = []
    for mode in modes:
        settings = PipelineSettings(mode=mode, group_size=group_size,
                                    design=design or LinkingDesign(), B=B)
        for n in n_list:
            for q in q_list:
                cell_base = replace(base, n_ext=n_ext or n)
                configs = replicate_configs(cell_base, n, q, replicates, seed)
                start = time.perf_counter()
                if n_jobs == 1:
                    pairs = [_safe_replicate(c, settings) for c in configs]
                else:
                    pairs = Parallel(n_jobs=n_jobs)(
                        delayed(_safe_replicate)(c, settings) for c in configs)
                outputs = [o for o, _ in pairs if o is not None]
                failures = [f for _, f in pairs if f is not None]
                summary = summarize_cell(mode, n, q, alpha, outputs, failures, settings,
                                         time.perf_counter() - start)
                if keep_outputs:
                    summary.outputs = outputs
                logger.info("cell mode=%s n=%d q=%d done in %.1fs", mode, n, q, summary.seconds)
                summaries.append(summary)
    return summaries


# -- FDR calibration -----------------------------------------------------


@dataclass
class FdrCurve:
    q_targets: list[float]
    observed_fdr: list[float]
    observed_fdr_umpu: list[float]
    discoveries_fab: list[float]
    discoveries_umpu: list[float]
    per_replicate_fdr: list[list[float]]
    replicates: int
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def fdr_calibration(config: DgpConfig, q_targets: Sequence[float], replicates: int,
                    settings: PipelineSettings | None = None, n_jobs: int = 1) -> FdrCurve:
    """Mean observed FDR of BH on FAB p-values at each target level."""
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    targets = [float(t) for t in q_targets]
    if any(not 0.0 < t < 1.0 for t in targets):
        raise ConfigError("FDR targets must be in (0, 1)")
    settings = settings or PipelineSettings()
    configs = [replace(config, seed=derive_seed(config.seed, r)) for r in range(replicates)]
    if n_jobs == 1:
        pairs = [_safe_replicate(c, settings) for c in configs]
    else:
        pairs = Parallel(n_jobs=n_jobs)(delayed(_safe_replicate)(c, settings) for c in configs)
    outputs = [o for o, _ in pairs if o is not None]
    failures = [f for _, f in pairs if f is not None]
    per_rep, fdr_umpu, disc_fab, disc_umpu = [], [], [], []
    for target in targets:
        fdrs, fdrs_u, d_f, d_u = [], [], [], []
        for o in outputs:
            dec = reject_bh(o["p_fab"], target)
            dec_u = reject_bh(o["p_umpu"], target)
            fdrs.append(evaluate(dec, o["truth"]).observed_fdr)
            fdrs_u.append(evaluate(dec_u, o["truth"]).observed_fdr)
            d_f.append(int(dec.rejected.sum()))
            d_u.append(int(dec_u.rejected.sum()))
        per_rep.append(fdrs)
        fdr_umpu.append(float(np.mean(fdrs_u)) if fdrs_u else float("nan"))
        disc_fab.append(float(np.mean(d_f)) if d_f else float("nan"))
        disc_umpu.append(float(np.mean(d_u)) if d_u else float("nan"))
    return FdrCurve(
        q_targets=targets,
        observed_fdr=[float(np.mean(f)) if f else float("nan") for f in per_rep],
        observed_fdr_umpu=fdr_umpu,
        discoveries_fab=disc_fab,
        discoveries_umpu=disc_umpu,
        per_replicate_fdr=per_rep,
        replicates=replicates,
        failures=failures,
    )

"""Correlation support recovery with FAB (frequentist assisted by Bayes) tests."""

from .corr_stats import (
    DataMatrix,
    PairIndex,
    ZStatistics,
    fisher_transform,
    index_to_pair,
    pair_to_index,
    pearson_correlation_matrix,
    standard_normal_cdf,
    t_statistic,
    umpu_p_value,
    z_statistics,
)
from .fab_engine import (
    TestResult,
    assign_groups,
    fab_p_value,
    run_fab_bootstrap,
    run_fab_external,
    run_umpu,
)
from .linking import LinkingDesign

__version__ = "0.1.0"

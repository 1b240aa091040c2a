"""FAB p-values in external-data and internal-bootstrap modes."""

from .decorrelation import DecorrelationBasis, build_decorrelation, deletion_basis
from .grouping import GroupAssignment, assign_groups, single_group
from .omega import OmegaEstimate, bootstrap_omega, bootstrap_z, identity_omega, regularize_omega
from .pvalues import fab_offset, fab_p_value
from .runners import (
    BootstrapSizeWarning,
    InternalOrderingWarning,
    TestResult,
    as_arrays,
    default_bootstrap_size,
    run_fab_bootstrap,
    run_fab_external,
    run_umpu,
)

__all__ = [
    "BootstrapSizeWarning",
    "DecorrelationBasis",
    "GroupAssignment",
    "InternalOrderingWarning",
    "OmegaEstimate",
    "TestResult",
    "as_arrays",
    "assign_groups",
    "bootstrap_omega",
    "bootstrap_z",
    "build_decorrelation",
    "default_bootstrap_size",
    "deletion_basis",
    "fab_offset",
    "fab_p_value",
    "identity_omega",
    "regularize_omega",
    "run_fab_bootstrap",
    "run_fab_external",
    "run_umpu",
    "single_group",
]

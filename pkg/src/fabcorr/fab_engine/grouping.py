from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..exceptions import ConfigError

OrderingSource = Literal["external_stats", "internal_z"]


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of the tests into rank-contiguous groups.

    ``order`` is the global ranking (largest ordering statistic first) and
    ``groups[k]`` holds consecutive entries of it. Groups built from the tested
    statistics themselves carry ``ordering_source="internal_z"``.
    """

    groups: tuple[np.ndarray, ...]
    group_size_target: int
    order: np.ndarray
    ordering_source: OrderingSource = "external_stats"

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return len(self.order)

    def group_of(self) -> np.ndarray:
        """Group id of every test, indexed by flat pair index."""
        out = np.empty(self.p, dtype=int)
        for k, g in enumerate(self.groups):
            out[g] = k
        return out


def assign_groups(ordering_stats, group_size: int,
                  ordering_source: OrderingSource = "external_stats") -> GroupAssignment:
    """Rank tests by ``ordering_stats`` (descending) and cut into chunks of ``group_size``.

    Ties keep ascending test index. The last group may be smaller.
    """
    stats = np.asarray(ordering_stats, dtype=float).ravel()
    p = stats.size
    if not 1 <= group_size <= p:
        raise ConfigError(f"group_size must be in [1, {p}], got {group_size}")
    if np.any(np.isnan(stats)):
        raise ConfigError("ordering statistics contain NaN")
    if ordering_source not in ("external_stats", "internal_z"):
        raise ConfigError(f"unknown ordering source {ordering_source!r}")
    order = np.argsort(-stats, kind="stable")
    m = math.ceil(p / group_size)
    groups = tuple(order[k * group_size:(k + 1) * group_size] for k in range(m))
    return GroupAssignment(groups, group_size, order, ordering_source)


def single_group(p: int) -> GroupAssignment:
    order = np.arange(p)
    return GroupAssignment((order,), p, order)

"""Numerical check that co-cluster MI never exceeds instance-level MI.

For any valid joint p(u, i) and any row-stochastic conditionals p(k|u),
p(l|i), the clustered joint p(k, l) = sum_{u,i} p(k|u) p(l|i) p(u, i) is a
coarsening, so MI(K; L) <= MI(U; I).  This module fuzzes that inequality
over randomized distributions and reports the observed slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .objectives import mutual_information

SLACK_TOL = 1e-9


@dataclass
class TheoremReport:
    trials: int
    violations: list[dict] = field(default_factory=list)
    min_slack: float = float("inf")
    max_slack: float = float("-inf")

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "violations": len(self.violations),
            "min_slack": self.min_slack,
            "max_slack": self.max_slack,
            "passed": self.passed,
        }


def sample_joint(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Nonnegative matrix summing to 1; half the draws are sparsified."""
    while True:
        j = rng.random((rows, cols))
        if rng.random() < 0.5:
            j *= rng.random((rows, cols)) < 0.6
        total = j.sum()
        if total > 0:
            return j / total


def sample_conditional(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Row-stochastic matrix; some rows sparse, none all-zero."""
    c = rng.random((rows, cols))
    if rng.random() < 0.5:
        c *= rng.random((rows, cols)) < 0.6
    sums = c.sum(axis=1)
    dead = sums == 0
    c[dead] = 1.0
    sums[dead] = cols
    return c / sums[:, None]


def cluster_joint(joint: np.ndarray, cond_u: np.ndarray, cond_i: np.ndarray) -> np.ndarray:
    """p(k, l) = sum_{u,i} p(k|u) p(l|i) p(u, i)."""
    return np.einsum("uk,ui,il->kl", cond_u, joint, cond_i)


def verify_theorem(
    trials: int,
    max_users: int = 8,
    max_items: int = 8,
    max_clusters: int = 5,
    seed: int = 0,
) -> TheoremReport:
    """Fuzz MI(K;L) <= MI(U;I) over random valid distributions.

    Any violation beyond ``SLACK_TOL`` is recorded with the offending
    distributions; the report carries the min/max observed slack.
    """
    if min(max_users, max_items, max_clusters) < 2:
        raise ConfigError("sizes must be >= 2")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = TheoremReport(trials=trials)
    for _ in range(trials):
        nu = int(rng.integers(2, max_users + 1))
        ni = int(rng.integers(2, max_items + 1))
        ck = int(rng.integers(2, max_clusters + 1))
        cl = int(rng.integers(2, max_clusters + 1))
        joint = sample_joint(rng, nu, ni)
        cond_u = sample_conditional(rng, nu, ck)
        cond_i = sample_conditional(rng, ni, cl)
        mi_instances = mutual_information(joint)
        mi_clusters = mutual_information(cluster_joint(joint, cond_u, cond_i))
        slack = mi_instances - mi_clusters
        report.min_slack = min(report.min_slack, slack)
        report.max_slack = max(report.max_slack, slack)
        if slack < -SLACK_TOL:
            report.violations.append(
                {
                    "joint": joint,
                    "cond_u": cond_u,
                    "cond_i": cond_i,
                    "mi_instances": mi_instances,
                    "mi_clusters": mi_clusters,
                    "slack": slack,
                }
            )
    return report

"""Hypothesis tests and aggregate trial metrics.

Wald tests use the variational posterior covariance as the parameter
covariance estimate.  Tail probabilities come from the standard-normal erf
and the regularized incomplete gamma function.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from seltrial.bayes import GaussianPosterior
from seltrial.errors import DimensionError, DomainError, NumericError

__all__ = [
    "WaldOutcome",
    "ReplicateTests",
    "SuccessRule",
    "BalanceOutcome",
    "SimulationReport",
    "wald_test",
    "wald_test_from_moments",
    "power_estimate",
    "parameter_mse",
    "mse_from_means",
    "chi_squared_balance",
    "normal_two_sided_p",
    "chi2_sf",
]

ALPHA_DEFAULT = 0.05


def normal_two_sided_p(z: float) -> float:
    """Two-sided standard-normal p-value, 2 * (1 - Phi(|z|))."""
    return float(special.erfc(abs(z) / math.sqrt(2.0)))


def chi2_sf(statistic: float, dof: int) -> float:
    """Chi-squared upper-tail probability via the regularized incomplete gamma."""
    if statistic < 0.0:
        raise DomainError("chi-squared statistic must be non-negative")
    return float(special.gammaincc(dof / 2.0, statistic / 2.0))


@dataclass(frozen=True)
class WaldOutcome:
    """statistic is the signed z for a single component, chi-squared otherwise."""

    statistic: float
    dof: int
    p_value: float
    reject: bool


def wald_test_from_moments(
    mean: np.ndarray,
    covariance: np.ndarray,
    component_set: Sequence[int],
    alpha: float = ALPHA_DEFAULT,
) -> WaldOutcome:
    """Wald test of H0: selected components are all zero."""
    idx = tuple(int(j) for j in component_set)
    if len(idx) == 0:
        raise DimensionError("component set must be nonempty")
    m = mean.shape[0]
    for j in idx:
        if not (0 <= j < m):
            raise DimensionError(f"component index {j} out of range for dim {m}")
    if len(idx) == 1:
        j = idx[0]
        var = float(covariance[j, j])
        if var <= 0.0:
            raise NumericError("non-positive variance in Wald test")
        z = float(mean[j]) / math.sqrt(var)
        p = normal_two_sided_p(z)
        return WaldOutcome(statistic=z, dof=1, p_value=p, reject=p < alpha)
    sub_mean = np.asarray([mean[j] for j in idx])
    sub_cov = np.asarray([[covariance[a, b] for b in idx] for a in idx])
    try:
        sol = np.linalg.solve(sub_cov, sub_mean)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular covariance submatrix in Wald test") from exc
    stat = float(sub_mean @ sol)
    if stat < 0.0:
        raise NumericError("negative Wald statistic: covariance not positive definite")
    p = chi2_sf(stat, len(idx))
    return WaldOutcome(statistic=stat, dof=len(idx), p_value=p, reject=p < alpha)


def wald_test(
    post: GaussianPosterior,
    component_set: Sequence[int],
    alpha: float = ALPHA_DEFAULT,
) -> WaldOutcome:
    """Wald test on posterior components (0 = intercept, 1.. = weights)."""
    return wald_test_from_moments(post.mean, post.covariance, component_set, alpha)


@dataclass(frozen=True)
class ReplicateTests:
    """Per-replicate Wald outcomes: one weights-vector test per arm, plus
    per-component tests (intercept and each weight) per arm."""

    per_arm_weights: tuple
    per_arm_components: tuple


class SuccessRule(Enum):
    ALL_ARMS = "all-arms"
    ANY_ARM = "any-arm"
    PER_PARAMETER_ALL = "per-parameter-all"


def _replicate_success(tests: ReplicateTests, rule: SuccessRule) -> bool:
    if rule is SuccessRule.ALL_ARMS:
        return all(t.reject for t in tests.per_arm_weights)
    if rule is SuccessRule.ANY_ARM:
        return any(t.reject for t in tests.per_arm_weights)
    if rule is SuccessRule.PER_PARAMETER_ALL:
        return all(t.reject for arm in tests.per_arm_components for t in arm)
    raise DomainError(f"unknown success rule {rule!r}")


def power_estimate(outcomes: Sequence[ReplicateTests], rule: SuccessRule) -> float:
    """Fraction of replicates whose Wald outcomes satisfy the success rule."""
    outcomes = list(outcomes)
    if not outcomes:
        raise DomainError("need at least one replicate")
    hits = sum(1 for t in outcomes if _replicate_success(t, rule))
    return hits / len(outcomes)


def mse_from_means(means: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Mean squared error over all arms and all parameter components."""
    if len(means) != len(truths) or len(means) == 0:
        raise DimensionError("means and truths must align, one entry per arm")
    total = 0.0
    count = 0
    for mu, tr in zip(means, truths):
        mu = np.asarray(mu, dtype=float)
        tr = np.asarray(tr, dtype=float)
        if mu.shape != tr.shape:
            raise DimensionError("parameter vector shapes differ")
        total += float(np.sum((mu - tr) ** 2))
        count += mu.size
    return total / count


def parameter_mse(post_per_arm: Sequence[GaussianPosterior], truth_per_arm) -> float:
    """MSE between posterior means and true parameters, averaged over
    all components (intercept and weights) of all arms."""
    return mse_from_means([p.mean for p in post_per_arm], list(truth_per_arm))


@dataclass(frozen=True)
class BalanceOutcome:
    statistic: float
    p_value: float
    significant_after_correction: bool


@dataclass(frozen=True)
class SimulationReport:
    """Aggregates over replicate trials plus the flat tables they came from.

    per_N_* maps are keyed by recruit count n; type1_rate is the pooled
    per-arm weight-test rejection rate at the final N (the Type-I error when
    the generating model is null).  imbalance_medians are the medians over
    replicates of the ascending-sorted final arm sizes.
    """

    study: str
    method: str
    seed: int
    n_replicates: int
    failed_replicates: int
    success_rule: str
    per_N_power: dict
    per_N_rejections: dict
    per_N_mse: dict
    type1_rate: float
    imbalance_n_significant: int
    imbalance_medians: tuple
    validation_accuracy: float
    config_echo: dict
    snapshot_header: tuple
    snapshot_rows: tuple
    replicate_header: tuple
    replicate_rows: tuple

    @property
    def final_power(self) -> float:
        return self.per_N_power[max(self.per_N_power)]

    @property
    def mean_rejected(self) -> float:
        return self.per_N_rejections[max(self.per_N_rejections)]


def chi_squared_balance(arm_counts: Sequence[int], n_tests: int) -> BalanceOutcome:
    """Pearson chi-squared test of arm counts against uniform allocation.

    Bonferroni-corrected: significant when p < 0.05 / n_tests.
    """
    counts = np.asarray(arm_counts, dtype=float)
    if counts.ndim != 1 or counts.shape[0] < 2:
        raise DimensionError("need counts for at least two arms")
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    total = float(counts.sum())
    if total == 0.0:
        raise DomainError("zero total count")
    if n_tests < 1:
        raise DomainError("n_tests must be at least 1")
    expected = total / counts.shape[0]
    stat = float(np.sum((counts - expected) ** 2) / expected)
    p = chi2_sf(stat, counts.shape[0] - 1)
    return BalanceOutcome(
        statistic=stat,
        p_value=p,
        significant_after_correction=p < ALPHA_DEFAULT / n_tests,
    )

"""Recruitment and allocation protocol.

Per candidate: utilities on every arm are normalized against the per-arm
utility extrema to give informativeness scores rho in [0,1]; an arm is chosen
(probability proportional to rho, uniformly at random, or argmax), then the
candidate is recruited with probability given by a transform of the selected
arm's rho.  During burn-in every candidate is recruited and the arm is chosen
uniformly.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from seltrial.errors import DomainError
from seltrial.utility import UtilitySpec, utility_extrema, utility_value

__all__ = [
    "Allocation",
    "Identity",
    "StepThreshold",
    "TanhStringency",
    "AlwaysRecruit",
    "RecruitmentRule",
    "ProtocolConfig",
    "Decision",
    "normalized_rho",
    "legacy_rho",
    "arm_probabilities",
    "recruitment_probability",
    "decide",
]


class Allocation(Enum):
    INFORMATION_ADAPTIVE = "information-adaptive"
    RANDOMISED = "randomised"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class Identity:
    """Recruit with probability rho itself."""


@dataclass(frozen=True)
class StepThreshold:
    """Deterministically recruit when rho exceeds p0."""

    p0: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.p0 <= 1.0):
            raise DomainError("p0 must lie in [0, 1]")


@dataclass(frozen=True)
class TanhStringency:
    """Smooth stringency transform (1 + tanh(rho / beta0 + p0)) / 2."""

    beta0: float
    p0: float = 0.0

    def __post_init__(self):
        if not (self.beta0 > 0.0):
            raise DomainError("beta0 must be positive")


@dataclass(frozen=True)
class AlwaysRecruit:
    """Recruitment probability fixed at one (adaptive-allocation-only designs)."""


RecruitmentRule = (Identity, StepThreshold, TanhStringency, AlwaysRecruit)


@dataclass(frozen=True)
class ProtocolConfig:
    allocation: Allocation
    recruitment: object
    burn_in: int
    arms: int

    def __post_init__(self):
        if self.burn_in < 0:
            raise DomainError("burn_in must be non-negative")
        if self.arms < 1:
            raise DomainError("need at least one arm")
        if not isinstance(self.recruitment, RecruitmentRule):
            raise DomainError(f"unknown recruitment rule {self.recruitment!r}")


@dataclass(frozen=True)
class Decision:
    arm: int
    recruited: bool
    rho: Optional[np.ndarray]
    diagnostics: dict = field(default_factory=dict)


def normalized_rho(e: float, e_min: float, e_max: float) -> float:
    """(E - E_min) / (E_max - E_min), clamped to [0, 1].

    A degenerate flat utility (E_max == E_min) gives rho = 1: with no basis to
    prefer any candidate, recruitment falls back to certain.
    """
    if not (math.isfinite(e) and math.isfinite(e_min) and math.isfinite(e_max)):
        raise DomainError("rho inputs must be finite")
    if e_max < e_min:
        raise DomainError("E_max must be at least E_min")
    if e_max == e_min:
        return 1.0
    r = (e - e_min) / (e_max - e_min)
    return min(1.0, max(0.0, r))


def legacy_rho(e: float, e_max: float) -> float:
    """Older normalization E / E_max (no lower anchor).

    Retained only as a comparison fixture: it inflates rho for mid-range
    utilities (e.g. E=4.5 on [4, 5] gives 0.9 instead of 0.5), which
    suppressed arm imbalance in adaptive-allocation designs.  Not used by
    decide().
    """
    if e_max == 0.0:
        raise DomainError("E_max must be nonzero")
    return e / e_max


def arm_probabilities(rhos: Sequence[float]) -> np.ndarray:
    """Allocation probabilities rho_k / sum_j rho_j; uniform if all are zero."""
    r = np.asarray(rhos, dtype=float)
    if r.ndim != 1 or r.shape[0] < 1:
        raise DomainError("rhos must be a nonempty vector")
    if not np.all(np.isfinite(r)):
        raise DomainError("rhos must be finite")
    total = float(r.sum())
    if total == 0.0:
        return np.full(r.shape[0], 1.0 / r.shape[0])
    return r / total


def recruitment_probability(rho_selected: float, rule) -> float:
    """Transform the selected arm's rho into a recruitment probability."""
    if isinstance(rule, AlwaysRecruit):
        return 1.0
    if not (0.0 <= rho_selected <= 1.0):
        raise DomainError("rho must lie in [0, 1]")
    if isinstance(rule, Identity):
        return rho_selected
    if isinstance(rule, StepThreshold):
        return 1.0 if rho_selected > rule.p0 else 0.0
    if isinstance(rule, TanhStringency):
        return 0.5 * (1.0 + math.tanh(rho_selected / rule.beta0 + rule.p0))
    raise DomainError(f"unknown recruitment rule {rule!r}")


def _uniform_arm(u: float, k: int) -> int:
    return min(int(u * k), k - 1)


def decide(
    candidate,
    state,
    utility: Optional[UtilitySpec],
    config: ProtocolConfig,
    rng: np.random.Generator,
) -> Decision:
    """One recruitment/allocation decision.

    state provides per_arm_posterior and recruited_count.  Consumes exactly
    one uniform draw during burn-in (arm choice) and exactly two afterwards
    (arm choice, recruitment), regardless of allocation mode, so decision
    replay is deterministic.  utility may be None only when no rho is needed
    (randomised allocation with unconditional recruitment).
    """
    k = config.arms
    if state.recruited_count < config.burn_in:
        u = rng.random()
        return Decision(
            arm=_uniform_arm(u, k),
            recruited=True,
            rho=None,
            diagnostics={"burn_in": True, "p_recruit": 1.0},
        )

    u_arm = rng.random()
    u_rec = rng.random()

    needs_all_arms = config.allocation in (
        Allocation.INFORMATION_ADAPTIVE,
        Allocation.DETERMINISTIC,
    )
    needs_selected = not isinstance(config.recruitment, AlwaysRecruit)

    rho = None
    e_values = None
    if needs_all_arms or needs_selected:
        if utility is None:
            raise DomainError("this protocol configuration requires a utility spec")

    def rho_for(arm_index: int) -> float:
        post = state.per_arm_posterior[arm_index]
        ext = utility_extrema(post, utility)
        e = utility_value(post, utility, candidate)
        e_values[arm_index] = e
        return normalized_rho(e, ext.e_min, ext.e_max)

    if needs_all_arms:
        e_values = np.full(k, np.nan)
        rho = np.array([rho_for(j) for j in range(k)])
        if config.allocation is Allocation.DETERMINISTIC:
            arm = int(np.argmax(rho))  # argmax takes the lowest index on ties
        else:
            probs = arm_probabilities(rho)
            arm = int(np.searchsorted(np.cumsum(probs), u_arm, side="right"))
            arm = min(arm, k - 1)
    else:
        arm = _uniform_arm(u_arm, k)
        if needs_selected:
            e_values = np.full(k, np.nan)
            rho = np.full(k, np.nan)
            rho[arm] = rho_for(arm)

    if needs_selected:
        p_recruit = recruitment_probability(float(rho[arm]), config.recruitment)
    else:
        p_recruit = 1.0
    recruited = u_rec < p_recruit

    return Decision(
        arm=arm,
        recruited=bool(recruited),
        rho=rho,
        diagnostics={
            "burn_in": False,
            "p_recruit": p_recruit,
            "e_values": e_values,
        },
    )

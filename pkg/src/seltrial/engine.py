"""Trial simulation engine.

Candidate streams feed a sequential recruit/allocate/update loop: each
candidate gets a protocol decision; recruits have their outcome revealed (or
drawn from the arm's true model), the arm posterior is refit, and per-step
test statistics are recorded so a single batch of replicates yields the whole
power-versus-N picture.  Replicates run on decorrelated counter-derived seed
streams and aggregate into a SimulationReport.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from seltrial.bayes import (
    GaussianPosterior,
    LabeledSample,
    PriorSpec,
    fit_variational,
    predict_prob,
    prior_posterior,
    refit_with,
)
from seltrial.errors import DimensionError, DomainError, SeltrialError
from seltrial.protocol import Allocation, ProtocolConfig, decide
from seltrial.stats import (
    ReplicateTests,
    SimulationReport,
    SuccessRule,
    chi_squared_balance,
    mse_from_means,
    power_estimate,
    wald_test_from_moments,
)
from seltrial.utility import UtilitySpec

__all__ = [
    "UniformLogistic",
    "GaussianMixture",
    "UnitSquareMultiArm",
    "DatasetReplay",
    "CandidateStream",
    "StreamEnd",
    "ValidationSpec",
    "TrialConfig",
    "TrialState",
    "TrialResult",
    "DecisionRecord",
    "SnapshotRecord",
    "generate_candidate",
    "run_trial",
    "run_replicates",
    "evaluate_validation",
    "replicate_rngs",
]

# committed posterior updates use a tighter tolerance than the public fit
# default so refit-consistency and order-invariance hold with margin at 1e-6
ENGINE_REFIT_TOL = 1e-8


class StreamEnd(SeltrialError):
    """Raised when a finite candidate stream is exhausted."""


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class UniformLogistic:
    """Covariate uniform on [lower, upper]; outcome from a logistic model."""

    w: float
    w0: float
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise DomainError("lower must be below upper")


@dataclass(frozen=True)
class GaussianMixture:
    """Class label from a coin flip, covariate from the class Gaussian.

    Labels are intrinsic to the candidate (drawn with the covariate), since
    the covariate is generated conditionally on the class.
    """

    mean_plus: float = -0.25
    mean_minus: float = 0.25
    sd: float = 0.5
    class_prob: float = 0.5

    def __post_init__(self):
        if not (self.sd > 0.0):
            raise DomainError("sd must be positive")
        if not (0.0 < self.class_prob < 1.0):
            raise DomainError("class_prob must lie strictly in (0, 1)")


@dataclass(frozen=True)
class UnitSquareMultiArm:
    """Covariates uniform over [-half_width, half_width]^2 with per-arm
    logistic outcome models (weights[k], intercepts[k])."""

    weights: Tuple[Tuple[float, float], ...]
    intercepts: Tuple[float, ...]
    half_width: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(self.intercepts) or len(self.weights) == 0:
            raise DimensionError("weights and intercepts must align, one per arm")
        if not (self.half_width > 0.0):
            raise DomainError("half_width must be positive")


@dataclass(frozen=True)
class DatasetReplay:
    """Finite dataset replayed in a per-replicate random arrival order.

    The first `holdout` samples of each permutation are reserved as the
    validation cohort and never enter the candidate stream.
    """

    samples: Tuple[LabeledSample, ...]
    holdout: int = 0

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DomainError("replay needs at least one sample")
        if not (0 <= self.holdout < len(self.samples)):
            raise DomainError("holdout must leave at least one candidate")


CandidateStream = Union[UniformLogistic, GaussianMixture, UnitSquareMultiArm, DatasetReplay]


def stream_dim(stream: CandidateStream) -> int:
    if isinstance(stream, (UniformLogistic, GaussianMixture)):
        return 1
    if isinstance(stream, UnitSquareMultiArm):
        return 2
    if isinstance(stream, DatasetReplay):
        return stream.samples[0].covariates.shape[0]
    raise DomainError(f"unknown stream {stream!r}")


def stream_truth(stream: CandidateStream) -> Optional[List[np.ndarray]]:
    """True augmented parameter vectors (w0, w) per arm; None if unknown."""
    if isinstance(stream, UniformLogistic):
        return [np.array([stream.w0, stream.w])]
    if isinstance(stream, GaussianMixture):
        # implied logistic model of the class-conditional Gaussians
        w = (stream.mean_plus - stream.mean_minus) / stream.sd**2
        w0 = (stream.mean_minus**2 - stream.mean_plus**2) / (2.0 * stream.sd**2)
        w0 += math.log(stream.class_prob / (1.0 - stream.class_prob))
        return [np.array([w0, w])]
    if isinstance(stream, UnitSquareMultiArm):
        return [
            np.array([b, *w]) for w, b in zip(stream.weights, stream.intercepts)
        ]
    return None


class _ReplayState:
    __slots__ = ("order", "cursor", "holdout_indices")

    def __init__(self, order, holdout_indices):
        self.order = order
        self.cursor = 0
        self.holdout_indices = holdout_indices


def _new_stream_state(stream: CandidateStream, rng: np.random.Generator):
    if isinstance(stream, DatasetReplay):
        perm = rng.permutation(len(stream.samples))
        return _ReplayState(perm[stream.holdout :], perm[: stream.holdout])
    return None


def _draw_covariates(stream, rng, state):
    """Next candidate's covariates and, when intrinsic, its label."""
    if isinstance(stream, UniformLogistic):
        x = stream.lower + (stream.upper - stream.lower) * rng.random()
        return np.array([x]), None
    if isinstance(stream, GaussianMixture):
        label = 1 if rng.random() < stream.class_prob else -1
        mean = stream.mean_plus if label == 1 else stream.mean_minus
        return np.array([mean + stream.sd * rng.standard_normal()]), label
    if isinstance(stream, UnitSquareMultiArm):
        u = rng.random(2)
        return stream.half_width * (2.0 * u - 1.0), None
    if isinstance(stream, DatasetReplay):
        if state is None or state.cursor >= state.order.shape[0]:
            raise StreamEnd("dataset replay exhausted")
        s = stream.samples[state.order[state.cursor]]
        state.cursor += 1
        return s.covariates, s.label
    raise DomainError(f"unknown stream {stream!r}")


def _label_for(stream, covariates, arm: int, rng: np.random.Generator) -> int:
    """Draw the outcome from the designated arm's true model."""
    if isinstance(stream, UniformLogistic):
        p = _sigmoid(stream.w0 + stream.w * float(covariates[0]))
    elif isinstance(stream, UnitSquareMultiArm):
        w = stream.weights[arm]
        p = _sigmoid(stream.intercepts[arm] + float(np.dot(w, covariates)))
    else:
        raise DomainError("stream labels are intrinsic; no per-arm model to draw from")
    return 1 if rng.random() < p else -1


def generate_candidate(stream, arm_truth: int, rng: np.random.Generator, state=None):
    """Draw one candidate: covariates plus the outcome under arm_truth's model."""
    covariates, label = _draw_covariates(stream, rng, state)
    if label is None:
        label = _label_for(stream, covariates, arm_truth, rng)
    return covariates, label


@dataclass(frozen=True)
class ValidationSpec:
    """holdout: reserved replay samples; fresh: new draws per arm; none: skip."""

    mode: str = "none"
    size: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "holdout", "fresh"):
            raise DomainError(f"unknown validation mode {self.mode!r}")
        if self.mode != "none" and self.size < 1:
            raise DomainError("validation size must be positive")


@dataclass(frozen=True)
class TrialConfig:
    n_total: int
    utility: Optional[UtilitySpec]
    protocol: ProtocolConfig
    prior: PriorSpec
    validation: ValidationSpec = ValidationSpec()
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n_total < self.protocol.burn_in:
            raise DomainError("n_total must be at least the burn-in length")
        if self.n_total < 1:
            raise DomainError("n_total must be positive")


@dataclass(frozen=True)
class DecisionRecord:
    covariates: tuple
    rho: Optional[tuple]
    arm: int
    recruited: bool


@dataclass(frozen=True)
class SnapshotRecord:
    """Per-recruit test inputs: everything power/MSE curves need at this n."""

    n: int
    rejected_so_far: int
    arm_counts: tuple
    mse: float
    arm_weights_stat: tuple
    arm_weights_p: tuple
    arm_component_p: tuple


@dataclass
class TrialState:
    per_arm_data: List[List[LabeledSample]]
    per_arm_posterior: List[GaussianPosterior]
    recruited_count: int = 0
    rejected_count: int = 0
    decision_log: List[DecisionRecord] = field(default_factory=list)


@dataclass
class TrialResult:
    final_state: TrialState
    snapshots: List[SnapshotRecord]
    validation_accuracy: float
    wald_outcomes: ReplicateTests
    complete: bool
    candidates_drawn: int


def _snapshot(state: TrialState, truths) -> SnapshotRecord:
    stats_per_arm = []
    comp_per_arm = []
    for post in state.per_arm_posterior:
        m = post.dim
        weights_idx = tuple(range(1, m))
        wt = wald_test_from_moments(post.mean, post.covariance, weights_idx)
        comps = tuple(
            wald_test_from_moments(post.mean, post.covariance, (j,)).p_value
            for j in range(m)
        )
        stats_per_arm.append(wt)
        comp_per_arm.append(comps)
    if truths is not None:
        mse = mse_from_means([p.mean for p in state.per_arm_posterior], truths)
    else:
        mse = math.nan
    return SnapshotRecord(
        n=state.recruited_count,
        rejected_so_far=state.rejected_count,
        arm_counts=tuple(len(d) for d in state.per_arm_data),
        mse=mse,
        arm_weights_stat=tuple(t.statistic for t in stats_per_arm),
        arm_weights_p=tuple(t.p_value for t in stats_per_arm),
        arm_component_p=tuple(comp_per_arm),
    )


def _replicate_tests(state: TrialState) -> ReplicateTests:
    per_arm = []
    per_comp = []
    for post in state.per_arm_posterior:
        m = post.dim
        per_arm.append(wald_test_from_moments(post.mean, post.covariance, tuple(range(1, m))))
        per_comp.append(
            tuple(
                wald_test_from_moments(post.mean, post.covariance, (j,)) for j in range(m)
            )
        )
    return ReplicateTests(per_arm_weights=tuple(per_arm), per_arm_components=tuple(per_comp))


def _predict_label(post: GaussianPosterior, covariates) -> int:
    # ties at p = 0.5 resolve to +1
    return 1 if predict_prob(post, covariates) >= 0.5 else -1


def _accuracy(post: GaussianPosterior, samples: Sequence[LabeledSample]) -> float:
    hits = sum(1 for s in samples if _predict_label(post, s.covariates) == s.label)
    return hits / len(samples)


def evaluate_validation(result: TrialResult, validation_set: Sequence[LabeledSample]) -> float:
    """Prediction accuracy of the first arm's posterior on a labeled cohort."""
    validation_set = list(validation_set)
    if not validation_set:
        raise DomainError("validation set must be nonempty")
    return _accuracy(result.final_state.per_arm_posterior[0], validation_set)


def _run_validation(config, stream, stream_state, state, rng) -> float:
    spec = config.validation
    if spec.mode == "none":
        return math.nan
    if spec.mode == "holdout":
        if not isinstance(stream, DatasetReplay):
            raise DomainError("holdout validation requires a dataset replay stream")
        cohort = [stream.samples[i] for i in stream_state.holdout_indices[: spec.size]]
        if not cohort:
            raise DomainError("replay stream reserved no holdout samples")
        return _accuracy(state.per_arm_posterior[0], cohort)
    # fresh: an independent cohort per arm, labeled by that arm's true model
    accs = []
    for arm, post in enumerate(state.per_arm_posterior):
        cohort = []
        for _ in range(spec.size):
            cov, label = _draw_covariates(stream, rng, None)
            if label is None:
                label = _label_for(stream, cov, arm, rng)
            cohort.append(LabeledSample(cov, label))
        accs.append(_accuracy(post, cohort))
    return float(np.mean(accs))


def run_trial(config: TrialConfig, stream: CandidateStream, rngs) -> TrialResult:
    """Simulate one trial to n_total recruits (or stream exhaustion).

    rngs carries four independent generators: candidates, labels, decisions,
    validation.  Candidate draws consume only rngs.candidates, so utility
    methods face identical candidate sequences under a shared seed.
    """
    d = stream_dim(stream)
    k = config.protocol.arms
    if isinstance(stream, UnitSquareMultiArm) and len(stream.weights) != k:
        raise DimensionError("stream arm count does not match protocol arms")
    truths = stream_truth(stream)
    state = TrialState(
        per_arm_data=[[] for _ in range(k)],
        per_arm_posterior=[prior_posterior(d, config.prior) for _ in range(k)],
    )
    stream_state = _new_stream_state(stream, rngs.candidates)
    snapshots: List[SnapshotRecord] = []
    candidates_drawn = 0
    complete = True
    while state.recruited_count < config.n_total:
        try:
            cov, fixed_label = _draw_covariates(stream, rngs.candidates, stream_state)
        except StreamEnd:
            complete = False
            break
        candidates_drawn += 1
        decision = decide(cov, state, config.utility, config.protocol, rngs.decisions)
        if decision.recruited:
            label = fixed_label
            if label is None:
                label = _label_for(stream, cov, decision.arm, rngs.labels)
            sample = LabeledSample(cov, label)
            state.per_arm_data[decision.arm].append(sample)
            state.per_arm_posterior[decision.arm] = refit_with(
                state.per_arm_posterior[decision.arm], cov, label, tol=ENGINE_REFIT_TOL
            )
            state.recruited_count += 1
            snapshots.append(_snapshot(state, truths))
        else:
            state.rejected_count += 1
        state.decision_log.append(
            DecisionRecord(
                covariates=tuple(float(v) for v in cov),
                rho=None if decision.rho is None else tuple(float(v) for v in decision.rho),
                arm=decision.arm,
                recruited=decision.recruited,
            )
        )
    validation_accuracy = _run_validation(config, stream, stream_state, state, rngs.validation)
    return TrialResult(
        final_state=state,
        snapshots=snapshots,
        validation_accuracy=validation_accuracy,
        wald_outcomes=_replicate_tests(state),
        complete=complete,
        candidates_drawn=candidates_drawn,
    )


class RngBundle:
    __slots__ = ("candidates", "labels", "decisions", "validation")

    def __init__(self, candidates, labels, decisions, validation):
        self.candidates = candidates
        self.labels = labels
        self.decisions = decisions
        self.validation = validation


def replicate_rngs(seed: int, replicate: int) -> RngBundle:
    """Four decorrelated generators for one replicate, reproducible in isolation."""
    streams = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate, j))))
        for j in range(4)
    ]
    return RngBundle(*streams)


def _lite_result(replicate: int, result: TrialResult) -> dict:
    """Everything aggregation and table emission need, cheap to pickle."""
    return {
        "replicate": replicate,
        "complete": result.complete,
        "candidates_drawn": result.candidates_drawn,
        "recruited": result.final_state.recruited_count,
        "rejected": result.final_state.rejected_count,
        "arm_counts": tuple(len(d) for d in result.final_state.per_arm_data),
        "validation": result.validation_accuracy,
        "snapshots": tuple(result.snapshots),
        "final_means": tuple(tuple(p.mean) for p in result.final_state.per_arm_posterior),
    }


def _run_one(args) -> dict:
    config, stream, seed, replicate = args
    try:
        rngs = replicate_rngs(seed, replicate)
        result = run_trial(config, stream, rngs)
    except SeltrialError as exc:
        return {"replicate": replicate, "failed": True, "error": str(exc)}
    return _lite_result(replicate, result)


def _rule_reject(weights_p: tuple, component_p: tuple, rule: SuccessRule, alpha=0.05) -> bool:
    if rule is SuccessRule.ALL_ARMS:
        return all(p < alpha for p in weights_p)
    if rule is SuccessRule.ANY_ARM:
        return any(p < alpha for p in weights_p)
    if rule is SuccessRule.PER_PARAMETER_ALL:
        return all(p < alpha for arm in component_p for p in arm)
    raise DomainError(f"unknown success rule {rule!r}")


def _aggregate(
    lites: List[dict],
    failures: int,
    config: TrialConfig,
    rule: SuccessRule,
    study: str,
    method: str,
    seed: int,
    n_replicates: int,
    config_echo: dict,
    dim: int,
) -> SimulationReport:
    k = config.protocol.arms
    per_n_hits: dict = {}
    per_n_total: dict = {}
    per_n_rej: dict = {}
    per_n_mse: dict = {}
    per_n_mse_count: dict = {}
    pooled_hits = 0
    pooled_total = 0
    snapshot_rows = []
    replicate_rows = []
    n_sig = 0
    sorted_counts = []
    validations = []

    for lite in sorted(lites, key=lambda d: d["replicate"]):
        r = lite["replicate"]
        for snap in lite["snapshots"]:
            n = snap.n
            per_n_hits[n] = per_n_hits.get(n, 0) + (
                1 if _rule_reject(snap.arm_weights_p, snap.arm_component_p, rule) else 0
            )
            per_n_total[n] = per_n_total.get(n, 0) + 1
            per_n_rej[n] = per_n_rej.get(n, 0) + snap.rejected_so_far
            if not math.isnan(snap.mse):
                per_n_mse[n] = per_n_mse.get(n, 0.0) + snap.mse
                per_n_mse_count[n] = per_n_mse_count.get(n, 0) + 1
            row = [r, n, snap.rejected_so_far, snap.mse]
            for a in range(k):
                row.extend(
                    [
                        snap.arm_counts[a],
                        snap.arm_weights_stat[a],
                        snap.arm_weights_p[a],
                        int(snap.arm_weights_p[a] < 0.05),
                    ]
                )
                row.extend(snap.arm_component_p[a])
            snapshot_rows.append(tuple(row))
        final = lite["snapshots"][-1] if lite["snapshots"] else None
        if final is not None:
            pooled_hits += sum(1 for p in final.arm_weights_p if p < 0.05)
            pooled_total += k
        if k >= 2 and final is not None:
            bal = chi_squared_balance(lite["arm_counts"], n_replicates)
            if bal.significant_after_correction:
                n_sig += 1
            bal_stat, bal_p, bal_sig = bal.statistic, bal.p_value, int(bal.significant_after_correction)
        else:
            bal_stat, bal_p, bal_sig = math.nan, math.nan, 0
        sorted_counts.append(tuple(sorted(lite["arm_counts"])))
        if not math.isnan(lite["validation"]):
            validations.append(lite["validation"])
        rrow = [
            lite["replicate"],
            int(lite["complete"]),
            lite["candidates_drawn"],
            lite["recruited"],
            lite["rejected"],
            lite["validation"],
        ]
        rrow.extend(lite["arm_counts"])
        rrow.extend([bal_stat, bal_p, bal_sig])
        if final is not None:
            rrow.extend(final.arm_weights_p)
        else:
            rrow.extend([math.nan] * k)
        replicate_rows.append(tuple(rrow))

    per_n_power = {n: per_n_hits[n] / per_n_total[n] for n in sorted(per_n_total)}
    per_n_rejections = {n: per_n_rej[n] / per_n_total[n] for n in sorted(per_n_total)}
    per_n_mse_mean = {
        n: (per_n_mse[n] / per_n_mse_count[n] if n in per_n_mse else math.nan)
        for n in sorted(per_n_total)
    }
    medians = tuple(
        float(np.median([c[i] for c in sorted_counts])) for i in range(k)
    ) if sorted_counts else tuple()

    snapshot_header = ["replicate", "n", "rejected_so_far", "mse"]
    d = dim
    for a in range(k):
        snapshot_header.extend(
            [f"arm{a}_count", f"arm{a}_weights_stat", f"arm{a}_weights_p", f"arm{a}_reject"]
        )
        snapshot_header.extend([f"arm{a}_p_c{j}" for j in range(d + 1)])
    replicate_header = [
        "replicate",
        "complete",
        "candidates_drawn",
        "recruited",
        "rejected",
        "validation_accuracy",
    ]
    replicate_header.extend([f"arm{a}_count" for a in range(k)])
    replicate_header.extend(["balance_stat", "balance_p", "balance_significant"])
    replicate_header.extend([f"arm{a}_weights_p" for a in range(k)])

    return SimulationReport(
        study=study,
        method=method,
        seed=seed,
        n_replicates=n_replicates,
        failed_replicates=failures,
        success_rule=rule.value,
        per_N_power=per_n_power,
        per_N_rejections=per_n_rejections,
        per_N_mse=per_n_mse_mean,
        type1_rate=(pooled_hits / pooled_total) if pooled_total else math.nan,
        imbalance_n_significant=n_sig,
        imbalance_medians=medians,
        validation_accuracy=float(np.mean(validations)) if validations else math.nan,
        config_echo=config_echo,
        snapshot_header=tuple(snapshot_header),
        snapshot_rows=tuple(snapshot_rows),
        replicate_header=tuple(replicate_header),
        replicate_rows=tuple(replicate_rows),
    )


def run_replicates(
    config: TrialConfig,
    stream: CandidateStream,
    n_replicates: int,
    seed: int,
    threads: int = 1,
    rule: SuccessRule = SuccessRule.ALL_ARMS,
    study: str = "custom",
    method: str = "custom",
    config_echo: Optional[dict] = None,
) -> SimulationReport:
    """Run independent replicate trials and aggregate them.

    Results are independent of threads (replicate r always uses the seed
    stream derived from (seed, r)); failed replicates are counted and
    excluded from aggregates.
    """
    if n_replicates < 1:
        raise DomainError("n_replicates must be at least 1")
    echo = dict(config_echo or {})
    results: List[dict] = []
    if threads > 1:
        jobs = [(config, stream, seed, r) for r in range(n_replicates)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(_run_one, jobs, chunksize=max(1, n_replicates // (8 * threads)))
            )
    else:
        results = [_run_one((config, stream, seed, r)) for r in range(n_replicates)]
    lites = [r for r in results if not r.get("failed")]
    failures = len(results) - len(lites)
    return _aggregate(
        lites,
        failures,
        config,
        rule,
        study,
        method,
        seed,
        n_replicates,
        echo,
        stream_dim(stream),
    )

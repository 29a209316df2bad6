"""Named study configurations and their translation into runnable trials.

Each study bundles a candidate stream, protocol, prior, and utility settings.
A RunConfig captures every knob a run depends on; resolve() applies study
defaults so the echoed configuration is complete and reproducible.
"""

import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from scipy.optimize import brentq
from scipy.stats import norm

from .bayes import PriorSpec
from .data import DEFAULT_LABEL_MAPPING, ScalingSpec, fit_scaling, apply_scaling, ingest_dataset
from .engine import (
    DatasetReplay,
    GaussianMixture,
    TrialConfig,
    UniformLogistic,
    UnitSquareMultiArm,
    ValidationSpec,
    stream_dim,
)
from .errors import DomainError
from .protocol import AlwaysRecruit, Allocation, Identity, ProtocolConfig
from .utility import IsotropicGaussian, SearchSpace, UniformHypercube, UtilityKind, UtilitySpec

STUDIES = (
    "case-study",
    "sim1-separable",
    "sim1-nonseparable",
    "sim2-selective-adaptive",
    "sim3-adaptive-only",
    "sim2-null",
)

METHODS = ("rct",) + tuple(k.value for k in UtilityKind)

# Three-arm simulation model (studies 2, 3, and the null variant).
SIM2_WEIGHTS = ((-3.0, 6.0), (4.0, -8.0), (5.0, 2.0))
SIM2_INTERCEPTS = (1.5, -1.5, 0.0)

_VALIDATION_MODES = ("none", "holdout", "fresh")


@dataclass(frozen=True)
class RunConfig:
    """Complete, serializable description of one simulate invocation."""

    study: str
    method: str
    seed: int
    n_total: Optional[int] = None
    n_replicates: int = 500
    burn_in: Optional[int] = None
    prior_variance: Optional[float] = None
    dataset_path: Optional[str] = None
    covariate_column: int = 4
    label_positive: str = "M"
    validation_mode: Optional[str] = None
    validation_size: Optional[int] = None
    quadrature_points: Optional[int] = None
    sigma_p: float = 0.5
    scaling_mode: Optional[str] = None
    search_lower: Optional[Tuple[float, ...]] = None
    search_upper: Optional[Tuple[float, ...]] = None
    threads: int = 1

    def __post_init__(self):
        if self.study not in STUDIES and self.study != "custom":
            raise DomainError(f"unknown study {self.study!r}")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.n_replicates < 1:
            raise DomainError("n_replicates must be at least 1")
        if self.validation_mode is not None and self.validation_mode not in _VALIDATION_MODES:
            raise DomainError(f"unknown validation mode {self.validation_mode!r}")
        if self.scaling_mode is not None and self.scaling_mode not in ("min-max", "decile", "none"):
            raise DomainError(f"unknown scaling mode {self.scaling_mode!r}")
        if (self.search_lower is None) != (self.search_upper is None):
            raise DomainError("search bounds must be overridden together")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")


@dataclass(frozen=True)
class PreparedStudy:
    run: RunConfig  # fully resolved copy
    trial: TrialConfig
    stream: object
    scaling: Optional[ScalingSpec]
    config_echo: Dict[str, object]
    unit_factor: float = 1.0  # [-1,1]-units to working-units conversion


def mixture_decile(stream: GaussianMixture, p: float) -> float:
    """p-quantile of the two-component marginal covariate distribution."""

    def cdf(q):
        c_plus = norm.cdf(q, stream.mean_plus, stream.sd)
        c_minus = norm.cdf(q, stream.mean_minus, stream.sd)
        return stream.class_prob * c_plus + (1.0 - stream.class_prob) * c_minus - p

    span = 10.0 * stream.sd + abs(stream.mean_plus) + abs(stream.mean_minus)
    return brentq(cdf, -span, span)


def _study_defaults(study: str) -> dict:
    if study == "case-study":
        return dict(n_total=25, burn_in=5, prior_variance=5.0,
                    validation_mode="holdout", validation_size=25, quadrature=32,
                    scaling="decile")
    if study == "sim1-separable":
        return dict(n_total=50, burn_in=5, prior_variance=400.0,
                    validation_mode="fresh", validation_size=25, quadrature=32,
                    scaling=None)
    if study == "sim1-nonseparable":
        return dict(n_total=50, burn_in=5, prior_variance=5.0,
                    validation_mode="fresh", validation_size=25, quadrature=32,
                    scaling=None)
    if study in ("sim2-selective-adaptive", "sim3-adaptive-only", "sim2-null"):
        return dict(n_total=150, burn_in=15, prior_variance=5.0,
                    validation_mode="fresh", validation_size=25, quadrature=16,
                    scaling=None)
    if study == "custom":
        # no defaults: a custom run must state every knob explicitly
        return dict(n_total=None, burn_in=None, prior_variance=None,
                    validation_mode=None, validation_size=None, quadrature=None,
                    scaling=None)
    raise DomainError(f"study {study!r} has no defaults; supply a full config")


def _build_stream(run: RunConfig):
    """Returns (stream, scaling or None, default search bounds, unit factor).

    The unit factor converts population-model constants stated for
    covariates scaled to [-1, +1] (the hypercube half-width and sigma_p)
    into whatever units the chosen scaling mode produces; it is the
    per-dimension ratio of the working scale to the min-max scale.
    """
    if run.study in ("case-study", "custom"):
        if not run.dataset_path:
            raise DomainError(f"{run.study} needs --dataset")
        mapping = {run.label_positive: 1}
        for key in DEFAULT_LABEL_MAPPING:
            mapping.setdefault(key, -1)
        raw = ingest_dataset(run.dataset_path, run.covariate_column, mapping)
        scaling = fit_scaling(raw, run.scaling_mode or "min-max")
        scaled = tuple(apply_scaling(raw, scaling))
        holdout = run.validation_size if run.validation_mode == "holdout" else 0
        stream = DatasetReplay(samples=scaled, holdout=holdout or 0)
        minmax = fit_scaling(raw, "min-max")
        ratios = [s / m for s, m in zip(scaling.scale, minmax.scale)]
        factor = math.exp(sum(math.log(r) for r in ratios) / len(ratios))
        return stream, scaling, (scaling.decile_lower, scaling.decile_upper), factor
    if run.study == "sim1-separable":
        stream = UniformLogistic(w=32.0, w0=-8.0)
        return stream, None, ((-0.8,), (0.8,)), 1.0
    if run.study == "sim1-nonseparable":
        stream = GaussianMixture()
        lo = mixture_decile(stream, 0.1)
        hi = mixture_decile(stream, 0.9)
        return stream, None, ((lo,), (hi,)), 1.0
    if run.study in ("sim2-selective-adaptive", "sim3-adaptive-only"):
        stream = UnitSquareMultiArm(weights=SIM2_WEIGHTS, intercepts=SIM2_INTERCEPTS)
        return stream, None, ((-0.8, -0.8), (0.8, 0.8)), 1.0
    if run.study == "sim2-null":
        zero = tuple((0.0, 0.0) for _ in SIM2_WEIGHTS)
        stream = UnitSquareMultiArm(weights=zero, intercepts=(0.0, 0.0, 0.0))
        return stream, None, ((-0.8, -0.8), (0.8, 0.8)), 1.0
    raise DomainError(f"study {run.study!r} has no stream definition")


def _protocol_for(run: RunConfig, arms: int, burn_in: int) -> ProtocolConfig:
    if run.method == "rct":
        allocation = Allocation.RANDOMISED
        recruitment = AlwaysRecruit()
    else:
        allocation = Allocation.INFORMATION_ADAPTIVE
        # study 3 keeps adaptive allocation but never turns candidates away
        if run.study == "sim3-adaptive-only":
            recruitment = AlwaysRecruit()
        else:
            recruitment = Identity()
    return ProtocolConfig(allocation=allocation, recruitment=recruitment,
                          burn_in=burn_in, arms=arms)


def prepare(run: RunConfig) -> PreparedStudy:
    """Resolve study defaults and construct the runnable trial pieces."""
    defaults = _study_defaults(run.study)
    resolved = replace(
        run,
        n_total=run.n_total if run.n_total is not None else defaults["n_total"],
        burn_in=run.burn_in if run.burn_in is not None else defaults["burn_in"],
        prior_variance=(run.prior_variance if run.prior_variance is not None
                        else defaults["prior_variance"]),
        validation_mode=(run.validation_mode if run.validation_mode is not None
                         else defaults["validation_mode"]),
        validation_size=(run.validation_size if run.validation_size is not None
                         else defaults["validation_size"]),
        quadrature_points=(run.quadrature_points if run.quadrature_points is not None
                           else defaults["quadrature"]),
        scaling_mode=(run.scaling_mode if run.scaling_mode is not None
                      else defaults["scaling"]),
    )
    if resolved.study == "custom":
        missing = [name for name in
                   ("n_total", "burn_in", "prior_variance", "validation_mode",
                    "validation_size", "quadrature_points", "scaling_mode")
                   if getattr(resolved, name) is None]
        if missing:
            raise DomainError(f"custom study requires explicit {', '.join(missing)}")
    stream, scaling, (lo, hi), unit_factor = _build_stream(resolved)
    if resolved.search_lower is not None:
        lo, hi = resolved.search_lower, resolved.search_upper
    resolved = replace(resolved,
                       search_lower=tuple(float(v) for v in lo),
                       search_upper=tuple(float(v) for v in hi))
    dim = stream_dim(stream)
    if len(resolved.search_lower) != dim:
        raise DomainError("search-space bounds do not match the stream dimension")
    arms = len(stream.weights) if isinstance(stream, UnitSquareMultiArm) else 1

    utility = None
    if resolved.method != "rct":
        kind = UtilityKind(resolved.method)
        population = None
        if kind is UtilityKind.GENERALISATION_ERROR:
            population = UniformHypercube(half_width=1.0 * unit_factor)
        elif kind is UtilityKind.VARIANCE_REDUCTION:
            population = IsotropicGaussian(sigma_p=resolved.sigma_p * unit_factor)
        utility = UtilitySpec(
            kind=kind,
            search_space=SearchSpace(lower=resolved.search_lower,
                                     upper=resolved.search_upper),
            quadrature_points_per_dim=resolved.quadrature_points,
            population=population,
        )

    validation = ValidationSpec(mode=resolved.validation_mode,
                                size=resolved.validation_size)
    trial = TrialConfig(
        n_total=resolved.n_total,
        utility=utility,
        protocol=_protocol_for(resolved, arms, resolved.burn_in),
        prior=PriorSpec(variance=resolved.prior_variance),
        validation=validation,
        seed=resolved.seed,
    )
    return PreparedStudy(run=resolved, trial=trial, stream=stream,
                         scaling=scaling, config_echo=config_mapping(resolved),
                         unit_factor=unit_factor)


_ECHO_FIELDS = (
    "study", "method", "seed", "n_total", "n_replicates", "burn_in",
    "prior_variance", "dataset_path", "covariate_column", "label_positive",
    "validation_mode", "validation_size", "quadrature_points", "sigma_p",
    "scaling_mode", "search_lower", "search_upper", "threads",
)


def config_mapping(run: RunConfig) -> Dict[str, object]:
    """Flat key/value view of a RunConfig, echoed into every report."""
    out: Dict[str, object] = {}
    for name in _ECHO_FIELDS:
        value = getattr(run, name)
        if isinstance(value, tuple):
            value = ",".join(repr(float(v)) for v in value)
        out[name] = value
    return out


def config_from_mapping(mapping: Dict[str, str]) -> RunConfig:
    """Inverse of config_mapping; values arrive as strings from a file."""
    kwargs: Dict[str, object] = {}
    converters = {
        "seed": int, "n_total": int, "n_replicates": int, "burn_in": int,
        "covariate_column": int, "validation_size": int,
        "quadrature_points": int, "threads": int,
        "prior_variance": float, "sigma_p": float,
    }
    for key, raw in mapping.items():
        if key not in _ECHO_FIELDS:
            raise DomainError(f"unknown config key {key!r}")
        if raw is None or raw == "" or raw == "None":
            kwargs[key] = None
            continue
        if key in ("search_lower", "search_upper"):
            kwargs[key] = tuple(float(v) for v in str(raw).split(","))
        elif key in converters:
            kwargs[key] = converters[key](raw)
        else:
            kwargs[key] = raw
    if "study" not in kwargs or "method" not in kwargs or kwargs.get("seed") is None:
        raise DomainError("config must define study, method, and seed")
    return RunConfig(**kwargs)

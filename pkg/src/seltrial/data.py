"""Dataset ingestion and covariate preprocessing.

Reads the standard breast-cancer-diagnostic layout (id, diagnosis letter, 30
real features per row), selects a biomarker column, maps diagnoses to -1/+1
labels, and provides the linear scaling to [-1, +1] plus nearest-rank decile
computation that defines the utility search space for dataset replay.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from seltrial.bayes import LabeledSample
from seltrial.errors import DataFormatError, DimensionError, DomainError

__all__ = [
    "FEATURE_NAMES",
    "ScalingSpec",
    "ingest_dataset",
    "fit_scaling",
    "apply_scaling",
    "nearest_rank_decile",
]

_BASE_FEATURES = [
    "radius",
    "texture",
    "perimeter",
    "area",
    "smoothness",
    "compactness",
    "concavity",
    "concave points",
    "symmetry",
    "fractal dimension",
]

# canonical 30-feature ordering: means, then standard errors, then worst values
FEATURE_NAMES: Tuple[str, ...] = tuple(
    [f"mean {b}" for b in _BASE_FEATURES]
    + [f"{b} error" for b in _BASE_FEATURES]
    + [f"worst {b}" for b in _BASE_FEATURES]
)

DEFAULT_LABEL_MAPPING: Dict[str, int] = {"M": 1, "B": -1}
N_FEATURES = 30


def _resolve_column(covariate_column: Union[int, str]) -> int:
    if isinstance(covariate_column, str):
        name = covariate_column.strip().lower()
        if name not in FEATURE_NAMES:
            raise DomainError(f"unknown feature name {covariate_column!r}")
        return FEATURE_NAMES.index(name)
    idx = int(covariate_column)
    if not (0 <= idx < N_FEATURES):
        raise DomainError(f"feature index {idx} out of range [0, {N_FEATURES})")
    return idx


def ingest_dataset(
    path,
    covariate_column: Union[int, str] = 4,
    label_mapping: Optional[Dict[str, int]] = None,
) -> List[LabeledSample]:
    """Parse a diagnostic-dataset file into labeled one-covariate samples.

    Each row must be comma-separated: identifier, diagnosis letter, then 30
    numeric features.  Malformed rows fail fast with their row number.
    """
    mapping = dict(DEFAULT_LABEL_MAPPING if label_mapping is None else label_mapping)
    col = _resolve_column(covariate_column)
    samples: List[LabeledSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 2 + N_FEATURES:
                raise DataFormatError(
                    f"row {lineno}: expected {2 + N_FEATURES} fields, got {len(fields)}"
                )
            diagnosis = fields[1].strip()
            if diagnosis not in mapping:
                raise DataFormatError(f"row {lineno}: unknown diagnosis {diagnosis!r}")
            try:
                value = float(fields[2 + col])
            except ValueError as exc:
                raise DataFormatError(f"row {lineno}: non-numeric feature") from exc
            if not math.isfinite(value):
                raise DataFormatError(f"row {lineno}: non-finite feature")
            samples.append(LabeledSample(np.array([value]), mapping[diagnosis]))
    if not samples:
        raise DataFormatError(f"no records found in {path}")
    return samples


def nearest_rank_decile(values: Sequence[float], p: float) -> float:
    """Nearest-rank quantile: the ceil(p*n)-th smallest value (1-based)."""
    if not (0.0 < p < 1.0):
        raise DomainError("p must lie strictly in (0, 1)")
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise DomainError("need at least one value")
    rank = math.ceil(p * arr.size)
    return float(arr[rank - 1])


@dataclass(frozen=True)
class ScalingSpec:
    """Per-dimension affine map scaled = (x - offset) * scale, plus the
    first/ninth deciles of the scaled fitting sample."""

    offset: Tuple[float, ...]
    scale: Tuple[float, ...]
    decile_lower: Tuple[float, ...]
    decile_upper: Tuple[float, ...]

    def apply(self, covariates: np.ndarray) -> np.ndarray:
        x = np.asarray(covariates, dtype=float)
        return (x - np.asarray(self.offset)) * np.asarray(self.scale)

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        z = np.asarray(scaled, dtype=float)
        return z / np.asarray(self.scale) + np.asarray(self.offset)


def fit_scaling(samples: Sequence[LabeledSample], mode: str = "min-max") -> ScalingSpec:
    """Fit a per-dimension linear rescaling of the covariates.

    mode "min-max" maps the sample range onto [-1, +1]; mode "decile" maps
    the nearest-rank first/ninth deciles onto -0.8/+0.8; mode "none" keeps
    raw coordinates.  Deciles in the returned spec are nearest-rank on the
    scaled sample.  A constant column cannot be scaled.
    """
    if mode not in ("min-max", "decile", "none"):
        raise DomainError(f"unknown scaling mode {mode!r}")
    samples = list(samples)
    if not samples:
        raise DomainError("cannot fit scaling to an empty sample")
    x = np.stack([s.covariates for s in samples])
    d = x.shape[1]
    if mode == "min-max":
        lo = x.min(axis=0)
        hi = x.max(axis=0)
        if np.any(hi <= lo):
            raise DomainError("constant covariate column cannot be scaled")
        offset = (hi + lo) / 2.0
        scale = 2.0 / (hi - lo)
    elif mode == "decile":
        lo = np.array([nearest_rank_decile(x[:, j], 0.1) for j in range(d)])
        hi = np.array([nearest_rank_decile(x[:, j], 0.9) for j in range(d)])
        if np.any(hi <= lo):
            raise DomainError("constant covariate column cannot be scaled")
        offset = (hi + lo) / 2.0
        scale = 1.6 / (hi - lo)
    else:
        offset = np.zeros(d)
        scale = np.ones(d)
    scaled = (x - offset) * scale
    dec_lo = tuple(nearest_rank_decile(scaled[:, j], 0.1) for j in range(d))
    dec_hi = tuple(nearest_rank_decile(scaled[:, j], 0.9) for j in range(d))
    return ScalingSpec(
        offset=tuple(float(v) for v in offset),
        scale=tuple(float(v) for v in scale),
        decile_lower=dec_lo,
        decile_upper=dec_hi,
    )


def apply_scaling(
    samples: Sequence[LabeledSample], spec: ScalingSpec
) -> List[LabeledSample]:
    """Rescale every sample's covariates."""
    out = []
    for s in samples:
        if s.covariates.shape[0] != len(spec.offset):
            raise DimensionError("sample dimension does not match scaling spec")
        out.append(LabeledSample(spec.apply(s.covariates), s.label))
    return out

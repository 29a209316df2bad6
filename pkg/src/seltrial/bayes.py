"""Variational Bayesian logistic regression with a Gaussian posterior.

The model is p(y=+1 | x, w) = sigmoid(w . x_aug) with x_aug = (1, x) and a
zero-mean isotropic Gaussian prior on w.  Fitting uses the quadratic
variational bound on the logistic sigmoid, which yields closed-form Gaussian
updates coupled through per-observation variational parameters xi solved by
fixed-point iteration.  Labels are encoded as -1/+1.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from seltrial import _kernels
from seltrial.errors import ConvergenceError, DimensionError, DomainError, NumericError

__all__ = [
    "LabeledSample",
    "PriorSpec",
    "GaussianPosterior",
    "augment",
    "fit_variational",
    "prior_posterior",
    "refit_with",
    "predict_prob",
    "posterior_entropy",
    "fisher_information",
]

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500


@dataclass(frozen=True)
class LabeledSample:
    """One observation: raw covariates (no leading 1) and a -1/+1 label."""

    covariates: np.ndarray
    label: int

    def __post_init__(self):
        cov = np.atleast_1d(np.asarray(self.covariates, dtype=float))
        if cov.ndim != 1:
            raise DimensionError("covariates must be a 1-d vector")
        if not np.all(np.isfinite(cov)):
            raise DomainError("covariates must be finite")
        if self.label not in (-1, 1):
            raise DomainError(f"label must be -1 or +1, got {self.label!r}")
        cov = cov.copy()
        cov.flags.writeable = False
        object.__setattr__(self, "covariates", cov)


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic Gaussian prior N(0, variance * I) over augmented weights."""

    variance: float = 5.0

    def __post_init__(self):
        if not (self.variance > 0.0 and np.isfinite(self.variance)):
            raise DomainError(f"prior variance must be positive, got {self.variance!r}")


@dataclass(frozen=True)
class GaussianPosterior:
    """Gaussian posterior over augmented weights plus the data that produced it.

    mean/covariance live in augmented coordinates (index 0 is the intercept).
    x_matrix holds the augmented observation rows and labels the -1/+1 labels;
    xi the converged variational parameters, reused to warm-start refits.
    """

    mean: np.ndarray
    covariance: np.ndarray
    xi: np.ndarray
    x_matrix: np.ndarray
    labels: np.ndarray
    prior: PriorSpec
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("mean", "covariance", "xi", "x_matrix", "labels"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def n_obs(self) -> int:
        return self.x_matrix.shape[0]

    @property
    def dim(self) -> int:
        """Augmented dimension (covariate dimension + 1)."""
        return self.mean.shape[0]


def augment(covariates: np.ndarray) -> np.ndarray:
    """Prepend the constant 1 to a raw covariate vector."""
    cov = np.atleast_1d(np.asarray(covariates, dtype=float))
    if cov.ndim != 1:
        raise DimensionError("covariates must be a 1-d vector")
    out = np.empty(cov.shape[0] + 1)
    out[0] = 1.0
    out[1:] = cov
    return out


def _fit_arrays(
    x_rows: np.ndarray,
    labels: np.ndarray,
    prior: PriorSpec,
    xi0: np.ndarray,
    tol: float,
    max_iter: int,
) -> GaussianPosterior:
    n = x_rows.shape[0]
    xi = xi0.copy()
    mean, cov, iters, delta, status = _kernels.fixed_point(
        x_rows, labels, n, prior.variance, xi, tol, max_iter
    )
    if status == _kernels.STATUS_SINGULAR:
        raise NumericError("posterior precision matrix is not positive definite")
    post = GaussianPosterior(
        mean=mean,
        covariance=cov,
        xi=xi,
        x_matrix=x_rows,
        labels=labels,
        prior=prior,
    )
    if status == _kernels.STATUS_NO_CONVERGENCE:
        err = ConvergenceError(
            f"xi fixed point did not reach tol={tol:g} after {iters} iterations "
            f"(last delta={delta:.3e})"
        )
        err.posterior = post  # last iterate; caller may accept or abort
        raise err
    return post


def fit_variational(
    data: Sequence[LabeledSample],
    prior: PriorSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    dim: Optional[int] = None,
) -> GaussianPosterior:
    """Fit the variational Gaussian posterior to a batch of labeled samples.

    All xi start at 1.  With no data the posterior equals the prior (dim must
    then be given to fix the covariate dimension).  Raises ConvergenceError
    carrying the last iterate as `.posterior` if the fixed point does not
    reach tol within max_iter, DimensionError on ragged covariates.
    """
    if not (tol > 0.0):
        raise DomainError("tol must be positive")
    if max_iter < 1:
        raise DomainError("max_iter must be at least 1")
    data = list(data)
    if not data:
        if dim is None:
            raise DimensionError("empty data requires an explicit covariate dimension")
        return prior_posterior(dim, prior)
    d = data[0].covariates.shape[0]
    if dim is not None and dim != d:
        raise DimensionError(f"dim={dim} does not match sample dimension {d}")
    for s in data:
        if s.covariates.shape[0] != d:
            raise DimensionError("covariate dimension differs across samples")
    x_rows = np.empty((len(data), d + 1))
    labels = np.empty(len(data))
    for i, s in enumerate(data):
        x_rows[i, 0] = 1.0
        x_rows[i, 1:] = s.covariates
        labels[i] = float(s.label)
    xi0 = np.ones(len(data))
    return _fit_arrays(x_rows, labels, prior, xi0, tol, max_iter)


def prior_posterior(dim: int, prior: PriorSpec) -> GaussianPosterior:
    """Posterior with no observations: N(0, variance * I) in dim+1 coordinates."""
    if dim < 1:
        raise DimensionError("covariate dimension must be at least 1")
    m = dim + 1
    return GaussianPosterior(
        mean=np.zeros(m),
        covariance=prior.variance * np.eye(m),
        xi=np.empty(0),
        x_matrix=np.empty((0, m)),
        labels=np.empty(0),
        prior=prior,
    )


def refit_with(
    posterior: GaussianPosterior,
    covariates: np.ndarray,
    label: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GaussianPosterior:
    """Posterior after adding one observation, warm-started from the parent.

    Existing xi carry over; the new observation starts at xi = 1.
    """
    if label not in (-1, 1):
        raise DomainError(f"label must be -1 or +1, got {label!r}")
    x_aug = augment(covariates)
    if x_aug.shape[0] != posterior.dim:
        raise DimensionError(
            f"covariate dimension {x_aug.shape[0] - 1} does not match posterior "
            f"dimension {posterior.dim - 1}"
        )
    n = posterior.n_obs
    x_rows = np.empty((n + 1, posterior.dim))
    x_rows[:n] = posterior.x_matrix
    x_rows[n] = x_aug
    labels = np.empty(n + 1)
    labels[:n] = posterior.labels
    labels[n] = float(label)
    xi0 = np.empty(n + 1)
    xi0[:n] = posterior.xi
    xi0[n] = 1.0
    return _fit_arrays(x_rows, labels, posterior.prior, xi0, tol, max_iter)


def predict_prob(posterior: GaussianPosterior, covariates: np.ndarray) -> float:
    """Moderated predictive probability p(y=+1 | x, data).

    Integrates the sigmoid likelihood against the Gaussian posterior using the
    probit-style approximation sigmoid(mu.x / sqrt(1 + pi x'Sigma x / 8)).
    """
    x_aug = augment(covariates)
    if x_aug.shape[0] != posterior.dim:
        raise DimensionError(
            f"covariate dimension {x_aug.shape[0] - 1} does not match posterior "
            f"dimension {posterior.dim - 1}"
        )
    return float(_kernels.predict_prob_aug(posterior.mean, posterior.covariance, x_aug))


def posterior_entropy(posterior: GaussianPosterior) -> float:
    """Differential entropy of the Gaussian posterior (nats)."""
    s = float(_kernels.gaussian_entropy(posterior.covariance))
    if not np.isfinite(s):
        raise NumericError("posterior covariance is not positive definite")
    return s


def fisher_information(posterior: GaussianPosterior) -> np.ndarray:
    """Observed information of the Gaussian posterior: inverse covariance."""
    try:
        return np.linalg.inv(posterior.covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericError("posterior covariance is singular") from exc

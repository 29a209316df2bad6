"""Candidate utility functions and their extrema.

Four utilities score how informative a candidate's covariates x* would be for
a given arm's posterior: predictive uncertainty, expected posterior-entropy
decrease, expected generalisation-error decrease, and expected
predictive-variance decrease.  The last three average hypothetical posterior
refits over both outcomes, weighted by the predictive probability.
Extrema over the covariate search box come from a multi-start simplex search.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Optional, Tuple, Union

import numpy as np

from seltrial import _kernels
from seltrial.bayes import GaussianPosterior, PriorSpec, refit_with
from seltrial.errors import ConvergenceError, DimensionError, DomainError, NumericError

__all__ = [
    "UtilityKind",
    "UniformHypercube",
    "IsotropicGaussian",
    "EmpiricalPopulation",
    "PopulationModel",
    "SearchSpace",
    "UtilitySpec",
    "VarianceReductionWorkspace",
    "ExtremaResult",
    "utility_uncertainty",
    "utility_entropy",
    "utility_generalisation_error",
    "utility_variance_reduction",
    "utility_value",
    "utility_extrema",
    "variance_integral_A",
    "generalisation_error_value",
    "predictive_variance_value",
    "LAMBDA_SQ",
]

LAMBDA_SQ = _kernels.LAMBDA_SQ

# hypothetical refits reuse the parent's converged xi, so a moderate tolerance
# is cheap; the search tolerances target ~1e-4 argument accuracy in the box
REFIT_TOL = 1e-6
REFIT_MAX_ITER = 500
N_QUASI_STARTS = 10
SEARCH_XATOL_FRAC = 1e-4
SEARCH_FRTOL = 1e-7
SEARCH_MAXFEV_PER_START = 150


class UtilityKind(Enum):
    UNCERTAINTY_SAMPLING = "uncertainty-sampling"
    POSTERIOR_ENTROPY = "posterior-entropy"
    GENERALISATION_ERROR = "generalisation-error"
    VARIANCE_REDUCTION = "variance-reduction"


_KIND_CODE = {
    UtilityKind.UNCERTAINTY_SAMPLING: _kernels.KIND_UNCERTAINTY,
    UtilityKind.POSTERIOR_ENTROPY: _kernels.KIND_ENTROPY,
    UtilityKind.GENERALISATION_ERROR: _kernels.KIND_GENERALISATION,
    UtilityKind.VARIANCE_REDUCTION: _kernels.KIND_VARIANCE_REDUCTION,
}


@dataclass(frozen=True)
class UniformHypercube:
    """Uniform population density over [-half_width, +half_width]^d."""

    half_width: float = 1.0

    def __post_init__(self):
        if not (self.half_width > 0.0 and math.isfinite(self.half_width)):
            raise DomainError("half_width must be positive")


@dataclass(frozen=True)
class IsotropicGaussian:
    """Zero-mean Gaussian population with covariance sigma_p^2 * I."""

    sigma_p: float = 0.5

    def __post_init__(self):
        if not (self.sigma_p > 0.0 and math.isfinite(self.sigma_p)):
            raise DomainError("sigma_p must be positive")


@dataclass(frozen=True)
class EmpiricalPopulation:
    """Population represented by a finite sample (rows as tuples)."""

    samples: Tuple[Tuple[float, ...], ...]

    @staticmethod
    def from_array(arr: np.ndarray) -> "EmpiricalPopulation":
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        return EmpiricalPopulation(tuple(tuple(row) for row in arr))

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DomainError("empirical population needs at least one sample")


PopulationModel = Union[UniformHypercube, IsotropicGaussian, EmpiricalPopulation]


@dataclass(frozen=True)
class SearchSpace:
    """Per-dimension box bounds for the extremum search (the decile hypercube)."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or len(lo) == 0:
            raise DimensionError("lower and upper must have equal, nonzero length")
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise DomainError(f"bounds must satisfy lower < upper, got ({a}, {b})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class UtilitySpec:
    """Which utility to compute and the ingredients it needs."""

    kind: UtilityKind
    search_space: SearchSpace
    quadrature_points_per_dim: int = 32
    population: Optional[PopulationModel] = None

    def __post_init__(self):
        if self.quadrature_points_per_dim < 8:
            raise DomainError("quadrature_points_per_dim must be at least 8")
        if self.kind is UtilityKind.GENERALISATION_ERROR and self.population is None:
            object.__setattr__(self, "population", UniformHypercube(1.0))
        if self.kind is UtilityKind.VARIANCE_REDUCTION:
            if self.population is None:
                object.__setattr__(self, "population", IsotropicGaussian(0.5))
            elif not isinstance(self.population, IsotropicGaussian):
                raise DomainError(
                    "variance reduction requires an isotropic Gaussian population; "
                    "the defining integral diverges for a uniform density"
                )


@dataclass(frozen=True)
class VarianceReductionWorkspace:
    """Intermediate quantities of the closed-form predictive-variance integral.

    A_matrix[mu, nu] = E[x_mu x_nu exp(-lambda_sq (w . x)^2)] over the Gaussian
    population in augmented coordinates (x_0 = 1).  b is one solution of
    B b = -2 lambda_sq w0 w' (None when no solution exists, i.e. w' = 0 with
    w0 != 0; any solution gives the same integral since B is rank-1 along w').
    """

    lambda_sq: float
    a_matrix: np.ndarray
    b: Optional[np.ndarray]
    b_mat: np.ndarray
    b_prime: np.ndarray
    b_prime_mat: np.ndarray
    c: float


@dataclass(frozen=True)
class ExtremaResult:
    e_min: float
    e_max: float
    argmin: np.ndarray
    argmax: np.ndarray
    n_evals: int = 0


def _population_quadrature(
    population: PopulationModel, dim: int, points_per_dim: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Augmented nodes and normalized weights averaging f over the population."""
    if isinstance(population, EmpiricalPopulation):
        pts = np.asarray(population.samples, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != dim:
            raise DimensionError("empirical population dimension mismatch")
        weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
    elif isinstance(population, UniformHypercube):
        nodes, w = np.polynomial.legendre.leggauss(points_per_dim)
        axes = [nodes * population.half_width] * dim
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wgrids = np.meshgrid(*([w] * dim), indexing="ij")
        weights = np.ones(pts.shape[0])
        for g in wgrids:
            weights *= g.ravel()
        weights /= 2.0**dim
    elif isinstance(population, IsotropicGaussian):
        nodes, w = np.polynomial.hermite.hermgauss(points_per_dim)
        axes = [nodes * math.sqrt(2.0) * population.sigma_p] * dim
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wgrids = np.meshgrid(*([w] * dim), indexing="ij")
        weights = np.ones(pts.shape[0])
        for g in wgrids:
            weights *= g.ravel()
        weights /= math.pi ** (dim / 2.0)
    else:
        raise DomainError(f"unsupported population model {population!r}")
    aug = np.empty((pts.shape[0], dim + 1))
    aug[:, 0] = 1.0
    aug[:, 1:] = pts
    return np.ascontiguousarray(aug), np.ascontiguousarray(weights)


_EMPTY_QUAD_X = np.zeros((1, 1))
_EMPTY_QUAD_W = np.zeros(1)


def _eval_ctx(
    post: GaussianPosterior,
    kind: UtilityKind,
    quadrature_points_per_dim: int = 32,
    population: Optional[PopulationModel] = None,
) -> _kernels.EvalCtx:
    """Reusable kernel context for evaluating one utility on one posterior."""
    key = ("ctx", kind, quadrature_points_per_dim, population)
    ctx = post._cache.get(key)
    if ctx is not None:
        return ctx
    n = post.n_obs
    m = post.dim
    x_rows = np.empty((n + 1, m))
    x_rows[:n] = post.x_matrix
    y_rows = np.empty(n + 1)
    y_rows[:n] = post.labels
    xi = np.ascontiguousarray(post.xi)
    base_entropy = 0.0
    base_gen_error = 0.0
    base_pred_var = 0.0
    quad_x, quad_w = _EMPTY_QUAD_X, _EMPTY_QUAD_W
    sigma_p = 0.0
    if kind is UtilityKind.POSTERIOR_ENTROPY:
        base_entropy = float(_kernels.gaussian_entropy(post.covariance))
        if not math.isfinite(base_entropy):
            raise NumericError("posterior covariance is not positive definite")
    elif kind is UtilityKind.GENERALISATION_ERROR:
        if population is None:
            population = UniformHypercube(1.0)
        quad_x, quad_w = _population_quadrature(population, m - 1, quadrature_points_per_dim)
        base_gen_error = float(
            _kernels.gen_error(post.mean, post.covariance, quad_x, quad_w)
        )
    elif kind is UtilityKind.VARIANCE_REDUCTION:
        if population is None:
            population = IsotropicGaussian(0.5)
        if not isinstance(population, IsotropicGaussian):
            raise DomainError("variance reduction requires an isotropic Gaussian population")
        sigma_p = population.sigma_p
        base_pred_var = float(
            _kernels.predictive_variance(post.mean, post.covariance, sigma_p)
        )
        if not math.isfinite(base_pred_var):
            raise NumericError("predictive-variance integral failed at the posterior mean")
    ctx = _kernels.EvalCtx(
        kind=_KIND_CODE[kind],
        x_rows=x_rows,
        y_rows=y_rows,
        xi=xi,
        n_obs=n,
        prior_var=post.prior.variance,
        mean=np.ascontiguousarray(post.mean),
        cov=np.ascontiguousarray(post.covariance),
        base_entropy=base_entropy,
        base_gen_error=base_gen_error,
        base_pred_var=base_pred_var,
        quad_x=quad_x,
        quad_w=quad_w,
        sigma_p=sigma_p,
        tol=REFIT_TOL,
        max_iter=REFIT_MAX_ITER,
    )
    post._cache[key] = ctx
    return ctx


def _check_candidate(post: GaussianPosterior, x_star) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x.ndim != 1 or x.shape[0] != post.dim - 1:
        raise DimensionError(
            f"candidate dimension {x.shape} does not match posterior covariate "
            f"dimension {post.dim - 1}"
        )
    return np.ascontiguousarray(x)


def _eval_or_raise(post: GaussianPosterior, ctx, x: np.ndarray) -> float:
    val = float(_kernels.eval_utility(ctx, x))
    if math.isfinite(val):
        return val
    # rerun the hypothetical refits through the Python layer so the failure
    # surfaces as the specific ConvergenceError/NumericError it was
    for label in (1, -1):
        refit_with(post, x, label, tol=REFIT_TOL, max_iter=REFIT_MAX_ITER)
    raise NumericError("utility evaluation produced a non-finite value")


def utility_uncertainty(post: GaussianPosterior, x_star) -> float:
    """Predictive-uncertainty utility min(p, 1-p); equals 0.5 exactly on the
    decision boundary and decays towards zero away from it."""
    x = _check_candidate(post, x_star)
    ctx = _eval_ctx(post, UtilityKind.UNCERTAINTY_SAMPLING)
    return _eval_or_raise(post, ctx, x)


def utility_entropy(
    post: GaussianPosterior, x_star, prior: Optional[PriorSpec] = None
) -> float:
    """Expected decrease in posterior entropy from absorbing (x*, y*).

    Averages the refit entropy over y* = +1/-1 with predictive weights.
    The prior defaults to the posterior's own.
    """
    x = _check_candidate(post, x_star)
    ctx = _eval_ctx(post, UtilityKind.POSTERIOR_ENTROPY)
    return _eval_or_raise(post, ctx, x)


def utility_generalisation_error(
    post: GaussianPosterior, x_star, spec: UtilitySpec, prior: Optional[PriorSpec] = None
) -> float:
    """Expected decrease in population-averaged misclassification probability."""
    if spec.kind is not UtilityKind.GENERALISATION_ERROR:
        raise DomainError(f"spec kind {spec.kind} does not select generalisation error")
    x = _check_candidate(post, x_star)
    ctx = _eval_ctx(
        post,
        UtilityKind.GENERALISATION_ERROR,
        spec.quadrature_points_per_dim,
        spec.population,
    )
    return _eval_or_raise(post, ctx, x)


def utility_variance_reduction(
    post: GaussianPosterior, x_star, spec: UtilitySpec, prior: Optional[PriorSpec] = None
) -> float:
    """Expected decrease in population-averaged predictive variance."""
    if spec.kind is not UtilityKind.VARIANCE_REDUCTION:
        raise DomainError(f"spec kind {spec.kind} does not select variance reduction")
    x = _check_candidate(post, x_star)
    ctx = _eval_ctx(
        post,
        UtilityKind.VARIANCE_REDUCTION,
        spec.quadrature_points_per_dim,
        spec.population,
    )
    return _eval_or_raise(post, ctx, x)


def utility_value(post: GaussianPosterior, spec: UtilitySpec, x_star) -> float:
    """Evaluate the utility selected by spec at one candidate."""
    x = _check_candidate(post, x_star)
    ctx = _eval_ctx(post, spec.kind, spec.quadrature_points_per_dim, spec.population)
    return _eval_or_raise(post, ctx, x)


def generalisation_error_value(post: GaussianPosterior, spec: UtilitySpec) -> float:
    """epsilon(D_n): population-averaged misclassification bound of the posterior."""
    quad_x, quad_w = _population_quadrature(
        spec.population or UniformHypercube(1.0),
        post.dim - 1,
        spec.quadrature_points_per_dim,
    )
    return float(_kernels.gen_error(post.mean, post.covariance, quad_x, quad_w))


def predictive_variance_value(post: GaussianPosterior, population: IsotropicGaussian) -> float:
    """sigma_tilde^2(D_n): population-averaged predictive variance of the posterior."""
    val = float(
        _kernels.predictive_variance(post.mean, post.covariance, population.sigma_p)
    )
    if not math.isfinite(val):
        raise NumericError("predictive-variance integral failed")
    return val


def variance_integral_A(mean_params, population: PopulationModel) -> VarianceReductionWorkspace:
    """Closed-form Gaussian integral A_munu = E[x_mu x_nu exp(-lambda^2 (w.x)^2)].

    mean_params = (w0, w') in augmented order.  Valid only for an isotropic
    Gaussian population; the integral does not exist for a uniform density.
    """
    if not isinstance(population, IsotropicGaussian):
        raise DomainError(
            "the predictive-variance integral exists only for a Gaussian population"
        )
    mean = np.atleast_1d(np.asarray(mean_params, dtype=float))
    if mean.ndim != 1 or mean.shape[0] < 2:
        raise DimensionError("mean_params must be (w0, w) with at least one weight")
    sigma_p = population.sigma_p
    d = mean.shape[0] - 1
    w0 = mean[0]
    w = mean[1:]
    lam2 = LAMBDA_SQ
    b_mat = 2.0 * lam2 * np.outer(w, w)
    bp_mat = b_mat + np.eye(d) / sigma_p**2
    rhs = -2.0 * lam2 * w0 * w
    try:
        b_prime = np.linalg.solve(bp_mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError("B' is singular") from exc
    wnorm2 = float(w @ w)
    if wnorm2 > 0.0:
        b = -w0 * w / wnorm2
        bt_b_b = 2.0 * lam2 * w0 * w0
    elif w0 == 0.0:
        b = np.zeros(d)
        bt_b_b = 0.0
    else:
        b = None
        bt_b_b = 2.0 * lam2 * w0 * w0
    quad = float(b_prime @ rhs)
    c = math.exp(-0.5 * bt_b_b + 0.5 * quad) / ((2.0 * math.pi) ** (d / 2.0) * sigma_p**d)
    a = np.empty((d + 1, d + 1))
    ok = _kernels.variance_matrix(mean, sigma_p, a)
    if not ok:
        raise NumericError("B' is not positive definite")
    return VarianceReductionWorkspace(
        lambda_sq=lam2,
        a_matrix=a,
        b=b,
        b_mat=b_mat,
        b_prime=b_prime,
        b_prime_mat=bp_mat,
        c=c,
    )


def _halton(index: int, base: int) -> float:
    f = 1.0
    r = 0.0
    i = index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def _primes(count: int):
    primes = []
    n = 2
    while len(primes) < count:
        if all(n % p for p in primes):
            primes.append(n)
        n += 1
    return primes


@lru_cache(maxsize=128)
def search_starts(space: SearchSpace) -> np.ndarray:
    """Deterministic start points: low-discrepancy interior points + corners."""
    d = space.dim
    lo = np.asarray(space.lower)
    hi = np.asarray(space.upper)
    bases = _primes(d)
    rows = []
    for i in range(1, N_QUASI_STARTS + 1):
        u = np.array([_halton(i, b) for b in bases])
        rows.append(lo + u * (hi - lo))
    for corner in product(*zip(space.lower, space.upper)):
        rows.append(np.asarray(corner, dtype=float))
    return np.ascontiguousarray(np.vstack(rows))


def utility_extrema(
    post: GaussianPosterior, spec: UtilitySpec, prior: Optional[PriorSpec] = None
) -> ExtremaResult:
    """Minimum and maximum of the utility over the search box.

    Every kind runs multi-start Nelder-Mead from deterministic starts; ties
    resolve to the lexicographically smallest argument.  Results are memoized
    on the (immutable) posterior.
    """
    key = ("extrema", spec)
    cached = post._cache.get(key)
    if cached is not None:
        return cached
    if spec.search_space.dim != post.dim - 1:
        raise DimensionError("search space dimension does not match posterior")
    result = _searched_extrema(post, spec)
    post._cache[key] = result
    return result


def _searched_extrema(post: GaussianPosterior, spec: UtilitySpec) -> ExtremaResult:
    ctx = _eval_ctx(post, spec.kind, spec.quadrature_points_per_dim, spec.population)
    lo = np.asarray(spec.search_space.lower)
    hi = np.asarray(spec.search_space.upper)
    starts = search_starts(spec.search_space)
    xatol = SEARCH_XATOL_FRAC * float(np.max(hi - lo))
    e_min, e_max, x_min, x_max, nfev = _kernels.extrema_multistart(
        ctx, starts, lo, hi, xatol, SEARCH_FRTOL, SEARCH_MAXFEV_PER_START
    )
    if not (math.isfinite(e_min) and math.isfinite(e_max)):
        raise NumericError("extremum search failed for every start point")
    return ExtremaResult(float(e_min), float(e_max), x_min, x_max, int(nfev))


def utility_curve(post: GaussianPosterior, spec: UtilitySpec, points: np.ndarray) -> np.ndarray:
    """Utility evaluated at each row of points (for grids and diagnostics)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != post.dim - 1:
        raise DimensionError("grid dimension does not match posterior")
    ctx = _eval_ctx(post, spec.kind, spec.quadrature_points_per_dim, spec.population)
    out = np.empty(pts.shape[0])
    _kernels.eval_utility_batch(ctx, np.ascontiguousarray(pts), out)
    if not np.all(np.isfinite(out)):
        raise NumericError("utility evaluation produced non-finite values")
    return out

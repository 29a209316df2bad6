"""Smoke test: kernel compilation, basic correctness, fixture calibration."""
import time
import numpy as np

t0 = time.time()
from seltrial import bayes, oracles, utility, _kernels
from seltrial.bayes import LabeledSample, PriorSpec, fit_variational, predict_prob, posterior_entropy, refit_with
from seltrial.utility import (
    IsotropicGaussian, SearchSpace, UtilityKind, UtilitySpec,
    utility_extrema, utility_curve, variance_integral_A, utility_uncertainty,
)

print(f"imports: {time.time()-t0:.1f}s")

# --- basic fit vs newton ---
rng = np.random.default_rng(1)
x = rng.uniform(-1, 1, 20)
p = 1 / (1 + np.exp(-(2.0 * x)))
y = np.where(rng.random(20) < p, 1, -1)
data = [LabeledSample(np.array([xi]), int(yi)) for xi, yi in zip(x, y)]
t0 = time.time()
post = fit_variational(data, PriorSpec(5.0))
print(f"first fit (incl. compile): {time.time()-t0:.1f}s")
x_rows = np.column_stack([np.ones(20), x])
w_map = oracles.newton_map(x_rows, y.astype(float), 5.0)
print("variational mean:", post.mean, " newton MAP:", w_map, " maxdiff:", np.max(np.abs(post.mean - w_map)))

# predictive sanity
print("predict at 0:", predict_prob(post, [0.0]))
print("entropy:", posterior_entropy(post))

# empty fit
p0 = fit_variational([], PriorSpec(5.0), dim=1)
print("prior posterior mean/cov:", p0.mean, p0.covariance.diagonal())

# --- fixture calibration ---
post_f, box = oracles.boundary_fixture()
print("fixture mean:", post_f.mean, "boundary:", -post_f.mean[0]/post_f.mean[1])
grid = np.linspace(-0.8, 0.8, 1601)[:, None]
spec_u = UtilitySpec(kind=UtilityKind.UNCERTAINTY_SAMPLING, search_space=box)
t0 = time.time()
vals_u = utility_curve(post_f, spec_u, grid)
print(f"uncertainty curve (incl compile): {time.time()-t0:.1f}s, peak at x={grid[np.argmax(vals_u),0]:.3f}, max={vals_u.max():.4f}")
print("E(-0.32) uncertainty:", utility_uncertainty(post_f, [-0.32]))

for kind in [UtilityKind.POSTERIOR_ENTROPY, UtilityKind.GENERALISATION_ERROR, UtilityKind.VARIANCE_REDUCTION]:
    spec = UtilitySpec(kind=kind, search_space=box)
    t0 = time.time()
    vals = utility_curve(post_f, spec, grid)
    dt = time.time() - t0
    t0 = time.time()
    ext = utility_extrema(post_f, spec)
    dt2 = time.time() - t0
    g_min, g_max = vals.min(), vals.max()
    print(f"{kind.value}: curve {dt:.2f}s ({dt/len(grid)*1e6:.1f}us/eval), extrema search {dt2*1000:.0f}ms nfev={ext.n_evals}")
    print(f"   grid ({g_min:.6g},{g_max:.6g}) argmax {grid[np.argmax(vals),0]:.3f}; search ({ext.e_min:.6g},{ext.e_max:.6g}) diff=({abs(g_min-ext.e_min):.2e},{abs(g_max-ext.e_max):.2e})")

# A-matrix quick MC check
ws = variance_integral_A(np.array([1.0, 2.0]), IsotropicGaussian(0.5))
a_mc = oracles.mc_variance_matrix(np.array([1.0, 2.0]), 0.5, 10**6, np.random.default_rng(2))
print("A closed:", ws.a_matrix.ravel(), "\nA mc:    ", a_mc.ravel())

# timing: warm refit
t0 = time.time()
for i in range(1000):
    refit_with(post_f, np.array([0.1]), 1)
print(f"warm refit via python layer: {(time.time()-t0)*1000:.1f}us/call")

ctx = utility._eval_ctx(post_f, UtilityKind.POSTERIOR_ENTROPY)
t0 = time.time()
for i in range(10000):
    _kernels.eval_utility(ctx, np.array([0.1]))
print(f"entropy eval: {(time.time()-t0)*100:.1f}us/call")

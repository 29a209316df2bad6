"""Compiled numerical kernels.

Everything on the per-candidate hot path lives here: the variational
fixed-point solver, the moderated predictive probability, the closed-form
Gaussian variance integral, quadrature for the generalisation error, and a
box-constrained Nelder-Mead driver used by the extremum search.  All kernels
are plain float64 loops so numba can compile them once and cache the result.
"""

import math
from collections import namedtuple

import numpy as np
from numba import njit

# fixed-point solver status codes
STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_SINGULAR = 2

# utility kind codes shared with the Python layer
KIND_UNCERTAINTY = 0
KIND_ENTROPY = 1
KIND_GENERALISATION = 2
KIND_VARIANCE_REDUCTION = 3

LAMBDA_SQ = math.pi / 8.0


# Evaluation context for a single parent posterior.  X/y carry the observed
# rows in [0:n] plus one writable slot at index n for the hypothetical
# candidate; xi holds the converged parent variational parameters used to
# warm-start hypothetical refits.
EvalCtx = namedtuple(
    "EvalCtx",
    [
        "kind",
        "x_rows",
        "y_rows",
        "xi",
        "n_obs",
        "prior_var",
        "mean",
        "cov",
        "base_entropy",
        "base_gen_error",
        "base_pred_var",
        "quad_x",
        "quad_w",
        "sigma_p",
        "tol",
        "max_iter",
    ],
)


@njit(cache=True)
def sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True)
def lambda_xi(xi):
    # lambda(xi) = (sigma(xi) - 1/2) / (2 xi), even in xi, -> 1/8 as xi -> 0
    a = abs(xi)
    if a < 1e-6:
        return 0.125
    return (sigmoid(a) - 0.5) / (2.0 * a)


@njit(cache=True)
def _cholesky(a, l):
    # lower-triangular Cholesky of a into l; False if not positive definite
    m = a.shape[0]
    for i in range(m):
        for j in range(m):
            l[i, j] = 0.0
    for j in range(m):
        s = a[j, j]
        for k in range(j):
            s -= l[j, k] * l[j, k]
        if s <= 0.0 or not math.isfinite(s):
            return False
        l[j, j] = math.sqrt(s)
        for i in range(j + 1, m):
            t = a[i, j]
            for k in range(j):
                t -= l[i, k] * l[j, k]
            l[i, j] = t / l[j, j]
    return True


@njit(cache=True)
def _chol_inverse(l, out):
    # out = (L L^T)^{-1} given lower-triangular L
    m = l.shape[0]
    linv = np.zeros((m, m))
    for j in range(m):
        linv[j, j] = 1.0 / l[j, j]
        for i in range(j + 1, m):
            s = 0.0
            for k in range(j, i):
                s -= l[i, k] * linv[k, j]
            linv[i, j] = s / l[i, i]
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(max(i, j), m):
                s += linv[k, i] * linv[k, j]
            out[i, j] = s


@njit(cache=True)
def _chol_logdet(l):
    m = l.shape[0]
    s = 0.0
    for j in range(m):
        s += math.log(l[j, j])
    return 2.0 * s


@njit(cache=True)
def _solve_at_xi(x_rows, y_rows, n, prior_var, xi, s, prec, lmat, cov, mean):
    # Gaussian update at fixed xi; one jitter retry if Cholesky fails.
    m = x_rows.shape[1]
    for a in range(m):
        for b in range(m):
            prec[a, b] = 0.0
        prec[a, a] = 1.0 / prior_var
    for i in range(n):
        two_lam = 2.0 * lambda_xi(xi[i])
        for a in range(m):
            xa = two_lam * x_rows[i, a]
            for b in range(a, m):
                prec[a, b] += xa * x_rows[i, b]
    for a in range(m):
        for b in range(a):
            prec[a, b] = prec[b, a]
    if not _cholesky(prec, lmat):
        for a in range(m):
            prec[a, a] += 1e-9
        if not _cholesky(prec, lmat):
            return False
    _chol_inverse(lmat, cov)
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc += cov[a, b] * s[b]
        mean[a] = acc
    return True


@njit(cache=True)
def fixed_point(x_rows, y_rows, n, prior_var, xi, tol, max_iter):
    """Variational fixed point for Bayesian logistic regression.

    x_rows[(0:n), :] are augmented covariate rows (leading 1), y_rows in
    {-1, +1}, xi the length-n variational parameters updated in place.
    Returns (mean, cov, iters, delta, status); mean/cov are recomputed at the
    final xi so the returned posterior satisfies the update equations exactly
    at the stored variational parameters.
    """
    m = x_rows.shape[1]
    prec = np.empty((m, m))
    lmat = np.empty((m, m))
    cov = np.empty((m, m))
    mean = np.empty(m)
    s = np.zeros(m)
    for i in range(n):
        hy = 0.5 * y_rows[i]
        for j in range(m):
            s[j] += hy * x_rows[i, j]

    status = STATUS_NO_CONVERGENCE
    iters = 0
    delta = 0.0
    for it in range(max_iter):
        iters = it + 1
        if not _solve_at_xi(x_rows, y_rows, n, prior_var, xi, s, prec, lmat, cov, mean):
            return mean, cov, iters, delta, STATUS_SINGULAR
        delta = 0.0
        for i in range(n):
            q = 0.0
            for a in range(m):
                row = 0.0
                for b in range(m):
                    row += (cov[a, b] + mean[a] * mean[b]) * x_rows[i, b]
                q += x_rows[i, a] * row
            nx = math.sqrt(q) if q > 0.0 else 0.0
            d = abs(nx - xi[i])
            if d > delta:
                delta = d
            xi[i] = nx
        if delta < tol:
            status = STATUS_OK
            break

    # recompute (mean, cov) at the final xi so the pair is exact there
    if not _solve_at_xi(x_rows, y_rows, n, prior_var, xi, s, prec, lmat, cov, mean):
        status = STATUS_SINGULAR
    return mean, cov, iters, delta, status


@njit(cache=True)
def predict_prob_aug(mean, cov, x_aug):
    """Moderated predictive p(y=+1 | x) for an augmented covariate row."""
    m = mean.shape[0]
    a = 0.0
    v = 0.0
    for i in range(m):
        a += mean[i] * x_aug[i]
        row = 0.0
        for j in range(m):
            row += cov[i, j] * x_aug[j]
        v += x_aug[i] * row
    return sigmoid(a / math.sqrt(1.0 + LAMBDA_SQ * v))


@njit(cache=True)
def gaussian_entropy(cov):
    """Differential entropy of N(mean, cov); returns +inf sentinel on failure."""
    m = cov.shape[0]
    lmat = np.empty((m, m))
    if not _cholesky(cov, lmat):
        return np.inf
    return 0.5 * m * (1.0 + math.log(2.0 * math.pi)) + 0.5 * _chol_logdet(lmat)


@njit(cache=True)
def gen_error(mean, cov, quad_x, quad_w):
    """Population-averaged misclassification bound sum_q w_q min(p_q, 1-p_q)."""
    acc = 0.0
    for q in range(quad_x.shape[0]):
        p = predict_prob_aug(mean, cov, quad_x[q])
        u = p if p < 0.5 else 1.0 - p
        acc += quad_w[q] * u
    return acc


@njit(cache=True)
def variance_matrix(mean, sigma_p, a_out):
    """Closed-form A with A_ij = E[x_i x_j exp(-lambda^2 (w.x)^2)], x0 = 1.

    The expectation is over x' ~ N(0, sigma_p^2 I) in the non-augmented
    coordinates; w = mean.  Uses B b = -2 lambda^2 w0 w' directly so the
    construction stays finite when w' = 0 or any component vanishes.
    Returns False if B' is not positive definite.
    """
    m = mean.shape[0]
    d = m - 1
    w0 = mean[0]
    bp = np.empty((d, d))
    lb = np.empty((d, d))
    bpinv = np.empty((d, d))
    bb = np.empty(d)
    bprime = np.empty(d)
    inv_s2 = 1.0 / (sigma_p * sigma_p)
    for i in range(d):
        wi = mean[1 + i]
        bb[i] = -2.0 * LAMBDA_SQ * w0 * wi
        for j in range(d):
            bp[i, j] = 2.0 * LAMBDA_SQ * wi * mean[1 + j]
        bp[i, i] += inv_s2
    if not _cholesky(bp, lb):
        return False
    _chol_inverse(lb, bpinv)
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += bpinv[i, j] * bb[j]
        bprime[i] = acc
    quad = 0.0
    for i in range(d):
        quad += bprime[i] * bb[i]
    logdet_bp = _chol_logdet(lb)
    log_a00 = -LAMBDA_SQ * w0 * w0 + 0.5 * quad - d * math.log(sigma_p) - 0.5 * logdet_bp
    a00 = math.exp(log_a00)
    a_out[0, 0] = a00
    for i in range(d):
        a_out[0, 1 + i] = a00 * bprime[i]
        a_out[1 + i, 0] = a_out[0, 1 + i]
        for j in range(d):
            a_out[1 + i, 1 + j] = a00 * (bpinv[i, j] + bprime[i] * bprime[j])
    return True


@njit(cache=True)
def predictive_variance(mean, cov, sigma_p):
    """sigma_tilde^2 = (lambda^2 / 2 pi) tr(A Sigma); NaN if A fails."""
    m = mean.shape[0]
    a = np.empty((m, m))
    if not variance_matrix(mean, sigma_p, a):
        return np.nan
    tr = 0.0
    for i in range(m):
        for j in range(m):
            tr += a[i, j] * cov[j, i]
    return (LAMBDA_SQ / (2.0 * math.pi)) * tr


@njit(cache=True)
def eval_utility(ctx, x_star):
    """Utility of candidate covariates x_star (non-augmented) under ctx.

    Returns NaN if a hypothetical refit fails; the search treats NaN as the
    worst possible value and the Python layer rejects non-finite extrema.
    """
    n = ctx.n_obs
    m = ctx.x_rows.shape[1]
    ctx.x_rows[n, 0] = 1.0
    for j in range(m - 1):
        ctx.x_rows[n, 1 + j] = x_star[j]
    p_plus = predict_prob_aug(ctx.mean, ctx.cov, ctx.x_rows[n])
    if ctx.kind == KIND_UNCERTAINTY:
        return p_plus if p_plus < 0.5 else 1.0 - p_plus

    acc = 0.0
    for sgn in range(2):
        yb = 1.0 if sgn == 0 else -1.0
        ctx.y_rows[n] = yb
        xi_work = np.empty(n + 1)
        for i in range(n):
            xi_work[i] = ctx.xi[i]
        xi_work[n] = 1.0
        mean_r, cov_r, iters, delta, status = fixed_point(
            ctx.x_rows, ctx.y_rows, n + 1, ctx.prior_var, xi_work, ctx.tol, ctx.max_iter
        )
        if status != STATUS_OK:
            return np.nan
        w = p_plus if yb > 0.0 else 1.0 - p_plus
        if ctx.kind == KIND_ENTROPY:
            acc += w * gaussian_entropy(cov_r)
        elif ctx.kind == KIND_GENERALISATION:
            acc += w * gen_error(mean_r, cov_r, ctx.quad_x, ctx.quad_w)
        else:
            acc += w * predictive_variance(mean_r, cov_r, ctx.sigma_p)

    if ctx.kind == KIND_ENTROPY:
        return ctx.base_entropy - acc
    if ctx.kind == KIND_GENERALISATION:
        return ctx.base_gen_error - acc
    return ctx.base_pred_var - acc


@njit(cache=True)
def _signed_eval(ctx, x, sign):
    v = eval_utility(ctx, x)
    if not math.isfinite(v):
        return np.inf
    return sign * v


@njit(cache=True)
def _nm_minimize(ctx, sign, x0, lower, upper, xatol, frtol, maxfev):
    """Nelder-Mead on sign * utility, box-constrained by projection.

    Returns (f_signed_best, x_best, nfev).  Fully deterministic.
    """
    d = x0.shape[0]
    nv = d + 1
    verts = np.empty((nv, d))
    fv = np.empty(nv)
    for j in range(d):
        lo = lower[j]
        hi = upper[j]
        v = x0[j]
        verts[0, j] = lo if v < lo else (hi if v > hi else v)
    for i in range(1, nv):
        for j in range(d):
            verts[i, j] = verts[0, j]
        j = i - 1
        h = 0.05 * (upper[j] - lower[j])
        if h <= 0.0:
            h = 0.00025
        cand = verts[0, j] + h
        if cand > upper[j]:
            cand = verts[0, j] - h
        verts[i, j] = cand
    nfev = 0
    for i in range(nv):
        fv[i] = _signed_eval(ctx, verts[i], sign)
        nfev += 1

    xr = np.empty(d)
    xe = np.empty(d)
    xc = np.empty(d)
    cen = np.empty(d)
    while nfev < maxfev:
        # order: best, worst, second-worst
        ib = 0
        iw = 0
        for i in range(1, nv):
            if fv[i] < fv[ib]:
                ib = i
            if fv[i] > fv[iw]:
                iw = i
        fsw = -np.inf
        for i in range(nv):
            if i != iw and fv[i] > fsw:
                fsw = fv[i]
        # convergence: simplex collapsed in x or in f
        xspread = 0.0
        for i in range(nv):
            for j in range(d):
                dx = abs(verts[i, j] - verts[ib, j])
                if dx > xspread:
                    xspread = dx
        fspread = fv[iw] - fv[ib]
        fb = abs(fv[ib])
        if xspread <= xatol or fspread <= frtol * (fb + 1e-12):
            break

        for j in range(d):
            c = 0.0
            for i in range(nv):
                if i != iw:
                    c += verts[i, j]
            cen[j] = c / d
        for j in range(d):
            v = cen[j] + (cen[j] - verts[iw, j])
            xr[j] = lower[j] if v < lower[j] else (upper[j] if v > upper[j] else v)
        fr = _signed_eval(ctx, xr, sign)
        nfev += 1
        if fr < fv[ib]:
            for j in range(d):
                v = cen[j] + 2.0 * (cen[j] - verts[iw, j])
                xe[j] = lower[j] if v < lower[j] else (upper[j] if v > upper[j] else v)
            fe = _signed_eval(ctx, xe, sign)
            nfev += 1
            if fe < fr:
                for j in range(d):
                    verts[iw, j] = xe[j]
                fv[iw] = fe
            else:
                for j in range(d):
                    verts[iw, j] = xr[j]
                fv[iw] = fr
        elif fr < fsw:
            for j in range(d):
                verts[iw, j] = xr[j]
            fv[iw] = fr
        else:
            if fr < fv[iw]:
                # outside contraction
                for j in range(d):
                    v = cen[j] + 0.5 * (cen[j] - verts[iw, j])
                    xc[j] = lower[j] if v < lower[j] else (upper[j] if v > upper[j] else v)
                fc = _signed_eval(ctx, xc, sign)
                nfev += 1
                accept = fc <= fr
            else:
                # inside contraction
                for j in range(d):
                    xc[j] = cen[j] - 0.5 * (cen[j] - verts[iw, j])
                fc = _signed_eval(ctx, xc, sign)
                nfev += 1
                accept = fc < fv[iw]
            if accept:
                for j in range(d):
                    verts[iw, j] = xc[j]
                fv[iw] = fc
            else:
                # shrink toward best
                for i in range(nv):
                    if i == ib:
                        continue
                    for j in range(d):
                        verts[i, j] = verts[ib, j] + 0.5 * (verts[i, j] - verts[ib, j])
                    fv[i] = _signed_eval(ctx, verts[i], sign)
                    nfev += 1

    ib = 0
    for i in range(1, nv):
        if fv[i] < fv[ib]:
            ib = i
    xbest = np.empty(d)
    for j in range(d):
        xbest[j] = verts[ib, j]
    return fv[ib], xbest, nfev


@njit(cache=True)
def _lex_less(a, b):
    for j in range(a.shape[0]):
        if a[j] < b[j]:
            return True
        if a[j] > b[j]:
            return False
    return False


@njit(cache=True)
def extrema_multistart(ctx, starts, lower, upper, xatol, frtol, maxfev):
    """Min and max of the utility over the box via multi-start Nelder-Mead.

    Ties on value resolve to the lexicographically smallest argument.
    Returns (e_min, e_max, x_min, x_max, nfev_total).
    """
    d = lower.shape[0]
    e_min = np.inf
    e_max = -np.inf
    x_min = np.empty(d)
    x_max = np.empty(d)
    nfev_total = 0
    for s in range(starts.shape[0]):
        f_lo, x_lo, n1 = _nm_minimize(ctx, 1.0, starts[s], lower, upper, xatol, frtol, maxfev)
        f_hi_s, x_hi, n2 = _nm_minimize(ctx, -1.0, starts[s], lower, upper, xatol, frtol, maxfev)
        nfev_total += n1 + n2
        if math.isfinite(f_lo):
            if f_lo < e_min or (f_lo == e_min and _lex_less(x_lo, x_min)):
                e_min = f_lo
                for j in range(d):
                    x_min[j] = x_lo[j]
        if math.isfinite(f_hi_s):
            f_hi = -f_hi_s
            if f_hi > e_max or (f_hi == e_max and _lex_less(x_hi, x_max)):
                e_max = f_hi
                for j in range(d):
                    x_max[j] = x_hi[j]
    return e_min, e_max, x_min, x_max, nfev_total


@njit(cache=True)
def eval_utility_batch(ctx, points, out):
    """Evaluate the utility at each row of points (dense grids, inspection)."""
    for i in range(points.shape[0]):
        out[i] = eval_utility(ctx, points[i])

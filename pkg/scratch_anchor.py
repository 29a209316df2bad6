"""Fig-1 double-anchor check: rho_US(x) ~ 0.68 and rho_PE(x) ~ 0.14 at the
point x sitting 0.09 left of the n=5 fitted decision boundary."""
import numpy as np

from seltrial.bayes import PriorSpec, fit_variational
from seltrial.data import ingest_dataset, fit_scaling, apply_scaling
from seltrial.protocol import normalized_rho
from seltrial.utility import SearchSpace, UtilityKind, UtilitySpec, utility_extrema, utility_value

raw = ingest_dataset("tests/data/wdbc.csv", 4)
scaling = fit_scaling(raw, "decile")
scaled = apply_scaling(raw, scaling)
box = SearchSpace((-0.8,), (0.8,))
spec_us = UtilitySpec(kind=UtilityKind.UNCERTAINTY_SAMPLING, search_space=box)
spec_pe = UtilitySpec(kind=UtilityKind.POSTERIOR_ENTROPY, search_space=box,
                      quadrature_points_per_dim=32)

rng = np.random.default_rng(4242)
N_DRAWS = 200

for pv in (5.0, 25.0, 50.0, 100.0):
    prior = PriorSpec(variance=pv)
    rows = []
    tried = 0
    while len(rows) < N_DRAWS and tried < 20 * N_DRAWS:
        tried += 1
        idx = rng.choice(len(scaled), size=5, replace=False)
        data = [scaled[i] for i in idx]
        labels = {s.label for s in data}
        if len(labels) < 2:
            continue
        post = fit_variational(data, prior)
        w0, w = float(post.mean[0]), float(post.mean[1])
        if abs(w) < 1e-6:
            continue
        b = -w0 / w
        x = b - 0.09
        if not (-0.7 <= b <= 0.7) or not (-0.8 <= x <= 0.8):
            continue
        e_us = utility_value(post, spec_us, np.array([x]))
        ext_us = utility_extrema(post, spec_us)
        rho_us = normalized_rho(e_us, ext_us.e_min, ext_us.e_max)
        e_pe = utility_value(post, spec_pe, np.array([x]))
        ext_pe = utility_extrema(post, spec_pe)
        rho_pe = normalized_rho(e_pe, ext_pe.e_min, ext_pe.e_max)
        rows.append((abs(w), b, e_us, rho_us, rho_pe, ext_us.e_min))
    a = np.array(rows)
    if len(a) == 0:
        print(f"var={pv}: no eligible draws")
        continue
    slope_med = np.median(a[:, 0])
    e_med = np.median(a[:, 2])
    rho_us_med = np.median(a[:, 3])
    rho_pe_med = np.median(a[:, 4])
    emin_med = np.median(a[:, 5])
    f_e = np.mean((a[:, 2] >= 0.30) & (a[:, 2] <= 0.38))
    f_us = np.mean((a[:, 3] >= 0.62) & (a[:, 3] <= 0.74))
    f_pe = np.mean((a[:, 4] >= 0.10) & (a[:, 4] <= 0.18))
    f_joint = np.mean((a[:, 2] >= 0.30) & (a[:, 2] <= 0.38)
                      & (a[:, 3] >= 0.62) & (a[:, 3] <= 0.74)
                      & (a[:, 4] >= 0.10) & (a[:, 4] <= 0.18))
    print(f"var={pv:5.0f}: n={len(a)} slope_med={slope_med:5.2f} "
          f"E_med={e_med:.3f} rhoUS_med={rho_us_med:.3f} rhoPE_med={rho_pe_med:.3f} "
          f"Emin_med={emin_med:.3f}")
    print(f"          frac E in [.30,.38]={f_e:.2f}  rhoUS in [.62,.74]={f_us:.2f} "
          f"rhoPE in [.10,.18]={f_pe:.2f}  joint={f_joint:.2f}", flush=True)

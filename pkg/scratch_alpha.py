"""Post-hoc power at several alpha levels, col 24, decile scaling, var 5."""
import numpy as np

from seltrial.bayes import PriorSpec
from seltrial.data import ingest_dataset, fit_scaling, apply_scaling
from seltrial.engine import (
    DatasetReplay,
    SuccessRule,
    TrialConfig,
    ValidationSpec,
    run_replicates,
)
from seltrial.protocol import AlwaysRecruit, Allocation, Identity, ProtocolConfig
from seltrial.utility import (
    IsotropicGaussian,
    SearchSpace,
    UniformHypercube,
    UtilityKind,
    UtilitySpec,
)

TARGETS = {
    "rct": (46.4, 0.0, 68.9),
    "uncertainty-sampling": (28.0, 44.9, 68.9),
    "posterior-entropy": (81.0, 30.0, 69.4),
    "generalisation-error": (65.4, 33.5, 69.1),
    "variance-reduction": (60.0, 26.0, 69.1),
}
ALPHAS = (0.05, 0.02, 0.01, 0.005)
N_REPS = 60
SEED = 777

raw = ingest_dataset("tests/data/wdbc.csv", 24)
scaling = fit_scaling(raw, "decile")
scaled = tuple(apply_scaling(raw, scaling))

for method, (tp, tr, ta) in TARGETS.items():
    stream = DatasetReplay(samples=scaled, holdout=25)
    if method == "rct":
        utility = None
        proto = ProtocolConfig(allocation=Allocation.RANDOMISED,
                               recruitment=AlwaysRecruit(), burn_in=5, arms=1)
    else:
        kind = UtilityKind(method)
        population = None
        if kind is UtilityKind.GENERALISATION_ERROR:
            population = UniformHypercube(half_width=1.0)
        elif kind is UtilityKind.VARIANCE_REDUCTION:
            population = IsotropicGaussian(sigma_p=0.5)
        utility = UtilitySpec(kind=kind, search_space=SearchSpace((-0.8,), (0.8,)),
                              quadrature_points_per_dim=32, population=population)
        proto = ProtocolConfig(allocation=Allocation.INFORMATION_ADAPTIVE,
                               recruitment=Identity(), burn_in=5, arms=1)
    trial = TrialConfig(n_total=25, utility=utility, protocol=proto,
                        prior=PriorSpec(variance=5.0),
                        validation=ValidationSpec(mode="holdout", size=25),
                        seed=SEED)
    rep = run_replicates(trial, stream, N_REPS, SEED, rule=SuccessRule.ALL_ARMS)
    # final-N weights-p lives in the last replicate_row columns
    pcol = rep.replicate_header.index("arm0_weights_p")
    ps = np.array([row[pcol] for row in rep.replicate_rows], dtype=float)
    n_final = max(rep.per_N_rejections)
    rej = rep.per_N_rejections[n_final]
    acc = 100.0 * rep.validation_accuracy
    powers = "  ".join(f"a={a}: {100*np.mean(ps < a):5.1f}" for a in ALPHAS)
    print(f"{method:22s} rej={rej:5.1f} acc={acc:4.1f} | {powers}"
          f"   (paper {tp} / {tr} / {ta})", flush=True)

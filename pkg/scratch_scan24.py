"""Case-study configuration scan: scaling mode x prior variance, box +-0.8."""
import sys
import time

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

N_REPS = int(sys.argv[1]) if len(sys.argv) > 1 else 60
SEED = 777

raw = ingest_dataset("tests/data/wdbc.csv", 24)

for mode in ("decile",):
    scaling = fit_scaling(raw, mode)
    scaled = tuple(apply_scaling(raw, scaling))
    for pv in (5.0, 100.0):
        print(f"=== scaling={mode} prior_var={pv} box=(-0.8, 0.8) reps={N_REPS} ===",
              flush=True)
        for method in TARGETS:
            t0 = time.time()
            stream = DatasetReplay(samples=scaled, holdout=25)
            if method == "rct":
                utility = None
                proto = ProtocolConfig(allocation=Allocation.RANDOMISED,
                                       recruitment=AlwaysRecruit(),
                                       burn_in=5, arms=1)
            else:
                kind = UtilityKind(method)
                population = None
                if kind is UtilityKind.GENERALISATION_ERROR:
                    population = UniformHypercube(half_width=1.0)
                elif kind is UtilityKind.VARIANCE_REDUCTION:
                    population = IsotropicGaussian(sigma_p=0.5)
                utility = UtilitySpec(kind=kind,
                                      search_space=SearchSpace((-0.8,), (0.8,)),
                                      quadrature_points_per_dim=32,
                                      population=population)
                proto = ProtocolConfig(allocation=Allocation.INFORMATION_ADAPTIVE,
                                       recruitment=Identity(),
                                       burn_in=5, arms=1)
            trial = TrialConfig(n_total=25, utility=utility, protocol=proto,
                                prior=PriorSpec(variance=pv),
                                validation=ValidationSpec(mode="holdout", size=25),
                                seed=SEED)
            rep = run_replicates(trial, stream, N_REPS, SEED,
                                 rule=SuccessRule.ALL_ARMS)
            n_final = max(rep.per_N_power)
            power = 100.0 * rep.per_N_power[n_final]
            rej = rep.per_N_rejections[n_final]
            acc = 100.0 * rep.validation_accuracy
            tp, tr, ta = TARGETS[method]
            print(f"  {method:22s} power={power:5.1f} rej={rej:5.1f} acc={acc:5.1f}"
                  f"   (paper {tp:.1f} / {tr:.1f} / {ta:.1f})"
                  f"   [{time.time()-t0:.0f}s, fails={rep.failed_replicates}]",
                  flush=True)

"""GE/VR population-model variants under decile scaling, var 5, 200 reps."""
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
from seltrial.protocol import Allocation, Identity, ProtocolConfig
from seltrial.utility import (
    EmpiricalPopulation,
    IsotropicGaussian,
    SearchSpace,
    UniformHypercube,
    UtilityKind,
    UtilitySpec,
)

N_REPS = 200
SEED = 777

raw = ingest_dataset("tests/data/wdbc.csv", 4)
scaling = fit_scaling(raw, "decile")
scaled = tuple(apply_scaling(raw, scaling))
emp = EmpiricalPopulation.from_array(np.array([s.covariates for s in scaled]))

cases = [
    ("GE hyper 1.0   (paper 65.4/33.5)", UtilityKind.GENERALISATION_ERROR, UniformHypercube(1.0)),
    ("GE hyper 2.51  (paper 65.4/33.5)", UtilityKind.GENERALISATION_ERROR, UniformHypercube(2.5125)),
    ("GE empirical   (paper 65.4/33.5)", UtilityKind.GENERALISATION_ERROR, emp),
    ("VR sigma 0.5   (paper 60.0/26.0)", UtilityKind.VARIANCE_REDUCTION, IsotropicGaussian(0.5)),
    ("VR sigma 1.256 (paper 60.0/26.0)", UtilityKind.VARIANCE_REDUCTION, IsotropicGaussian(1.2563)),
    ("VR sigma 0.637 (paper 60.0/26.0)", UtilityKind.VARIANCE_REDUCTION, IsotropicGaussian(0.637)),
]

for name, kind, population in cases:
    stream = DatasetReplay(samples=scaled, holdout=25)
    utility = UtilitySpec(kind=kind, search_space=SearchSpace((-0.8,), (0.8,)),
                          quadrature_points_per_dim=32, population=population)
    proto = ProtocolConfig(allocation=Allocation.INFORMATION_ADAPTIVE,
                           recruitment=Identity(), burn_in=5, arms=1)
    trial = TrialConfig(n_total=25, utility=utility, protocol=proto,
                        prior=PriorSpec(variance=5.0),
                        validation=ValidationSpec(mode="holdout", size=25),
                        seed=SEED)
    rep = run_replicates(trial, stream, N_REPS, SEED, rule=SuccessRule.ALL_ARMS)
    n_final = max(rep.per_N_power)
    print(f"{name}: power={100*rep.per_N_power[n_final]:5.1f} "
          f"rej={rep.per_N_rejections[n_final]:5.1f} "
          f"acc={100*rep.validation_accuracy:5.1f} fails={rep.failed_replicates}",
          flush=True)

"""Command-line interface.

Subcommands: `simulate` runs a named study and writes a report directory;
`inspect-utility` tabulates the four utility curves over a grid (the same
view as the paper-style utility plots) from either a built-in five-point
burn-in fixture or a study's replicate-0 burn-in; `validate-oracles` runs
the numerical cross-validation suite.  Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from seltrial.engine import run_replicates, run_trial, replicate_rngs
from seltrial.errors import SeltrialError
from seltrial.report import emit_report, format_number, parse_keyvalue
from seltrial.stats import SuccessRule
from seltrial.studies import (
    METHODS,
    STUDIES,
    RunConfig,
    config_from_mapping,
    prepare,
)
from seltrial.utility import (
    IsotropicGaussian,
    SearchSpace,
    UniformHypercube,
    UtilityKind,
    UtilitySpec,
    utility_curve,
    utility_extrema,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seltrial",
        description="Selective-recruitment adaptive trial simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a study and write a report")
    sim.add_argument("--study", choices=STUDIES + ("custom",))
    sim.add_argument("--method", choices=METHODS)
    sim.add_argument("--n", type=int, help="total recruits per trial")
    sim.add_argument("--replicates", type=int, help="number of replicate trials")
    sim.add_argument("--seed", type=int, help="base seed (required)")
    sim.add_argument("--out", help="report output directory (required)")
    sim.add_argument("--config", help="key=value file; entries override flags")
    sim.add_argument("--dataset", help="dataset file for replay studies")
    sim.add_argument("--threads", type=int, help="replicate-level worker processes")

    ins = sub.add_parser(
        "inspect-utility", help="tabulate the four utility curves over a grid"
    )
    ins.add_argument("--study", choices=STUDIES + ("custom",),
                     help="derive the posterior from this study's burn-in")
    ins.add_argument("--seed", type=int,
                     help="replicate-0 seed for the study burn-in")
    ins.add_argument("--n", type=int, default=201, help="grid points per dimension")
    ins.add_argument("--out", help="output directory (required)")
    ins.add_argument("--config", help="key=value file; entries override flags")
    ins.add_argument("--dataset", help="dataset file for replay studies")

    val = sub.add_parser("validate-oracles", help="run the numerical oracle suite")
    val.add_argument("--fast", action="store_true", help="reduced Monte-Carlo budgets")
    val.add_argument("--seed", type=int, default=20260814)
    return parser


def _merged_run_config(args, parser) -> RunConfig:
    mapping = {}
    if args.study is not None:
        mapping["study"] = args.study
    if args.method is not None:
        mapping["method"] = args.method
    if args.n is not None:
        mapping["n_total"] = str(args.n)
    if args.replicates is not None:
        mapping["n_replicates"] = str(args.replicates)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.dataset is not None:
        mapping["dataset_path"] = args.dataset
    if args.threads is not None:
        mapping["threads"] = str(args.threads)
    if args.config:
        mapping.update(parse_keyvalue(args.config))
    if "seed" not in mapping or mapping.get("seed") in (None, "", "None"):
        parser.error("--seed is required (no wall-clock default)")
    if "study" not in mapping or "method" not in mapping:
        parser.error("--study and --method are required")
    try:
        return config_from_mapping(mapping)
    except SeltrialError as exc:
        parser.error(str(exc))


def _cmd_simulate(args, parser) -> int:
    run = _merged_run_config(args, parser)
    if not args.out:
        parser.error("--out is required for simulate")
    prep = prepare(run)
    report = run_replicates(
        prep.trial,
        prep.stream,
        n_replicates=prep.run.n_replicates,
        seed=prep.run.seed,
        threads=prep.run.threads,
        rule=SuccessRule.ALL_ARMS,
        study=prep.run.study,
        method=prep.run.method,
        config_echo=prep.config_echo,
    )
    paths = emit_report(report, args.out)
    n_final = max(report.per_N_power) if report.per_N_power else None
    if n_final is not None:
        print(
            f"{report.study} / {report.method}: "
            f"power={100 * report.per_N_power[n_final]:.1f}% "
            f"rejections={report.per_N_rejections[n_final]:.1f} "
            f"validation={100 * report.validation_accuracy:.1f}% "
            f"({report.n_replicates} replicates, {report.failed_replicates} failed)"
        )
    print(f"report written to {paths['summary'].parent}")
    return 0


def _fixture_posterior():
    from seltrial.oracles import boundary_fixture

    post, box = boundary_fixture()
    return post, box, 32, 0.5, 1.0


def _study_posterior(args, parser):
    mapping = {"method": "rct", "n_replicates": "1"}
    if args.study is not None:
        mapping["study"] = args.study
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.dataset is not None:
        mapping["dataset_path"] = args.dataset
    if args.config:
        mapping.update(parse_keyvalue(args.config))
    if mapping.get("seed") in (None, "", "None"):
        parser.error("--seed is required with --study")
    try:
        run = config_from_mapping(mapping)
    except SeltrialError as exc:
        parser.error(str(exc))
    prep = prepare(run)
    burn_only = replace(prep.trial, n_total=prep.trial.protocol.burn_in)
    result = run_trial(burn_only, prep.stream, replicate_rngs(prep.run.seed, 0))
    post = result.final_state.per_arm_posterior[0]
    box = SearchSpace(lower=prep.run.search_lower, upper=prep.run.search_upper)
    return post, box, prep.run.quadrature_points, prep.run.sigma_p, prep.unit_factor


def _cmd_inspect_utility(args, parser) -> int:
    if not args.out:
        parser.error("--out is required for inspect-utility")
    if args.n < 2:
        parser.error("--n must be at least 2")
    if args.study is not None:
        post, box, quad, sigma_p, factor = _study_posterior(args, parser)
    else:
        post, box, quad, sigma_p, factor = _fixture_posterior()

    dim = len(box.lower)
    axes = [np.linspace(box.lower[j], box.upper[j], args.n) for j in range(dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta_lines = []
    for kind in UtilityKind:
        population = None
        if kind is UtilityKind.GENERALISATION_ERROR:
            population = UniformHypercube(half_width=1.0 * factor)
        elif kind is UtilityKind.VARIANCE_REDUCTION:
            population = IsotropicGaussian(sigma_p=sigma_p * factor)
        spec = UtilitySpec(kind=kind, search_space=box,
                           quadrature_points_per_dim=quad, population=population)
        values = utility_curve(post, spec, points)
        ext = utility_extrema(post, spec)
        span = ext.e_max - ext.e_min
        path = out / f"utility-{kind.value}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            cols = [f"x{j}" for j in range(dim)]
            fh.write(",".join(cols + ["value", "rho"]) + "\n")
            for row, val in zip(points, values):
                rho = (val - ext.e_min) / span if span > 0 else 0.0
                rho = min(max(rho, 0.0), 1.0)
                cells = [format_number(v) for v in row]
                cells.append(format_number(float(val)))
                cells.append(format_number(rho))
                fh.write(",".join(cells) + "\n")
        meta_lines.append(
            f"{kind.value}: e_min={format_number(ext.e_min)} "
            f"e_max={format_number(ext.e_max)} "
            f"argmin={','.join(format_number(v) for v in ext.argmin)} "
            f"argmax={','.join(format_number(v) for v in ext.argmax)}"
        )
        print(f"wrote {path}")
    with open(out / "extrema.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(meta_lines) + "\n")
    return 0


def _cmd_validate_oracles(args) -> int:
    from seltrial.oracles import run_all

    checks = run_all(fast=args.fast, seed=args.seed)
    width = max(len(c.name) for c in checks)
    ok = True
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.name:<{width}}  {check.detail}")
        ok = ok and check.passed
    print(f"{sum(c.passed for c in checks)}/{len(checks)} oracle checks passed")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args, parser)
        if args.command == "inspect-utility":
            return _cmd_inspect_utility(args, parser)
        if args.command == "validate-oracles":
            return _cmd_validate_oracles(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SeltrialError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())

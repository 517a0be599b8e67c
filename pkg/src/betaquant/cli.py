"""Command-line front end.

Subcommands: ``weights build``, ``fit qr``, ``fit sqr``, ``simulate``,
``cluster``, ``report``, ``pipeline``.  Exit codes: 0 on success, 2 for
configuration problems, 3 for data problems, 4 for numerical failures.
"""

import argparse
import dataclasses
import json
import sys

import numpy as np

from .clusters import classify_residuals, cluster_report, write_assignment_csv
from .data import ModelConfig, build_design, load_dataset, write_dataset_csv
from .errors import (
    ConfigError,
    ConstructionError,
    DataValidationError,
    DegenerateClusterError,
    DomainError,
    EstimationError,
    InferenceError,
    PipelineError,
    RankDeficiencyError,
    SchemaError,
)
from .inference import bootstrap_intervals, sandwich_intervals
from .pipeline import (
    RunConfig,
    bundled_dataset_path,
    emit_plot_data,
    run_pipeline,
    _round6,
)
from .quantile import fit_quantile
from .simulate import synthetic_dataset
from .spatial import fit_dsqr, fit_ivqr
from .weights import build_knn_weights, export_coordinate_list

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_CONFIG_ERRORS = (ConfigError, ConstructionError)
_DATA_ERRORS = (SchemaError, DataValidationError, DomainError, OSError)
_NUMERICAL_ERRORS = (
    EstimationError,
    InferenceError,
    RankDeficiencyError,
    DegenerateClusterError,
)


def _classify(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return _classify(exc.cause)
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(exc, _NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    raise exc


def _parse_floats(text: str, name: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"could not parse {name} list {text!r}: {exc}") from None


def _parse_rho_grid(text: str) -> tuple[float, ...]:
    """Parse 'lo:hi:step' into an inclusive, rounding-stable grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"rho grid must be lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"could not parse rho grid {text!r}: {exc}") from None
    if step <= 0 or hi < lo:
        raise ConfigError(f"rho grid needs step > 0 and hi >= lo, got {text!r}")
    count = int(round((hi - lo) / step)) + 1
    grid = tuple(round(lo + i * step, 10) for i in range(count) if lo + i * step <= hi + 1e-9)
    return grid


def _load_inputs(path: str | None, model: ModelConfig):
    ds = load_dataset(path or bundled_dataset_path())
    design = build_design(ds, model)
    return ds, design


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        period_years=args.period_years,
        tech_plus_depreciation=args.tech_plus_depreciation,
        growth_annualized=not args.total_growth,
        log_human_capital=not args.raw_human_capital,
    )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--period-years", type=float, default=28.0, help="growth period length")
    p.add_argument(
        "--tech-plus-depreciation",
        type=float,
        default=0.05,
        help="technology-plus-depreciation constant added to population growth",
    )
    p.add_argument(
        "--total-growth",
        action="store_true",
        help="treat the outcome as total log growth instead of annualized",
    )
    p.add_argument(
        "--raw-human-capital",
        action="store_true",
        help="enter human capital in levels instead of logs",
    )


def _add_ci_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ci", choices=("bootstrap", "sandwich", "none"), default="none")
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--reps", type=int, default=999, help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--workers", type=int, default=1)


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(_round6(payload), sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)


def _cmd_weights_build(args) -> int:
    ds, _ = _load_inputs(args.input, ModelConfig())
    W = build_knn_weights(ds, k=args.k)
    export_coordinate_list(W, args.output)
    print(f"{args.output}: {W.n} regions, k={W.k}")
    return EXIT_OK


def _cmd_fit_qr(args) -> int:
    model = _model_config(args)
    _, design = _load_inputs(args.input, model)
    fit = fit_quantile(design.matrix, design.outcome, args.tau, columns=design.columns)
    payload = {
        "model": "quantile",
        "tau": args.tau,
        "columns": list(design.columns),
        "coefficients": dict(zip(design.columns, fit.coefficients)),
        "objective": fit.objective,
        "n_iterations": fit.n_iterations,
        "n_neg": fit.n_neg,
        "n_zero": fit.n_zero,
        "intervals": None,
    }
    if args.ci == "bootstrap":
        iv = bootstrap_intervals(
            design.matrix,
            design.outcome,
            args.tau,
            B=args.reps,
            level=args.level,
            seed=args.seed,
            workers=args.workers,
            columns=design.columns,
        )
        payload["intervals"] = {"method": iv.method, "level": iv.level, "bounds": iv.as_dict(), "meta": iv.meta}
    elif args.ci == "sandwich":
        iv = sandwich_intervals(fit, design.matrix, level=args.level)
        payload["intervals"] = {"method": iv.method, "level": iv.level, "bounds": iv.as_dict()}
    _write_json(payload, args.output)
    return EXIT_OK


def _cmd_fit_sqr(args) -> int:
    model = _model_config(args)
    ds, design = _load_inputs(args.input, model)
    W = build_knn_weights(ds, k=args.k)
    grid = np.asarray(_parse_rho_grid(args.rho_grid)) if args.rho_grid else None
    if args.estimator == "ivqr":
        fit = fit_ivqr(design.matrix, design.outcome, W, args.tau, grid=grid, columns=design.columns)
    else:
        fit = fit_dsqr(design.matrix, design.outcome, W, args.tau, columns=design.columns)
    payload = {
        "model": "spatial-quantile",
        "estimator": fit.estimator,
        "tau": args.tau,
        "rho": fit.rho,
        "columns": list(design.columns),
        "coefficients": dict(zip(design.columns, fit.coefficients)),
        "auxiliary_coefficient": fit.auxiliary_coefficient,
        "grid_profile": fit.grid_profile.tolist() if fit.grid_profile is not None else None,
        "meta": fit.meta,
        "intervals": None,
    }
    if args.ci == "sandwich":
        iv = sandwich_intervals(fit, design.matrix, level=args.level)
        payload["intervals"] = {"method": iv.method, "level": iv.level, "bounds": iv.as_dict()}
    elif args.ci == "bootstrap":
        raise ConfigError(
            "bootstrap intervals are not offered for spatial fits; use --ci sandwich"
        )
    _write_json(payload, args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    theta = _parse_floats(args.theta, "theta") if args.theta else None
    ds = synthetic_dataset(
        n=args.n,
        n_countries=args.countries,
        rho=args.rho,
        **({"theta": theta} if theta else {}),
        noise=args.noise,
        seed=args.seed,
        layout=args.layout,
        profile=args.profile,
        high_rho=args.high_rho,
        threshold=args.threshold,
    )
    write_dataset_csv(ds, args.output)
    print(f"{args.output}: {ds.n} regions, {len(set(ds.countries))} countries")
    return EXIT_OK


def _cmd_cluster(args) -> int:
    model = _model_config(args)
    ds, design = _load_inputs(args.input, model)
    if args.source == "qr":
        fit = fit_quantile(design.matrix, design.outcome, args.tau_u, columns=design.columns)
        source = {"model": "quantile", "tau": args.tau_u}
        residuals = fit.residuals
    else:
        W = build_knn_weights(ds, k=args.k_neighbors)
        if args.estimator == "ivqr":
            sfit = fit_ivqr(design.matrix, design.outcome, W, args.tau_u, columns=design.columns)
        else:
            sfit = fit_dsqr(design.matrix, design.outcome, W, args.tau_u, columns=design.columns)
        source = {"model": "spatial", "estimator": args.estimator, "tau": args.tau_u}
        residuals = sfit.residuals
    assignment = classify_residuals(
        residuals,
        k=args.k,
        scheme=args.scheme,
        tau_u=args.tau_u,
        region_ids=design.region_ids,
        source=source,
    )
    write_assignment_csv(assignment, args.output)
    _write_json(cluster_report(assignment, ds), args.summary)
    print(f"{args.output}: {assignment.n} regions in {assignment.k} classes")
    return EXIT_OK


def _cmd_report(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        report_dict = json.load(fh)
    emit_plot_data(report_dict, args.which, args.output)
    print(args.output)
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides.update(json.load(fh))
    flag_map = {
        "input": "input_path",
        "output_dir": "output_dir",
        "k": "k_neighbors",
        "estimator": "estimator",
        "ci": "ci_method",
        "level": "level",
        "reps": "replicates",
        "seed": "seed",
        "tau_u": "cluster_tau_u",
        "cluster_k": "cluster_k",
        "scheme": "cluster_scheme",
        "source": "cluster_source",
        "workers": "workers",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.taus is not None:
        overrides["taus"] = _parse_floats(args.taus, "taus")
    if args.rho_grid is not None:
        overrides["rho_grid"] = _parse_rho_grid(args.rho_grid)
    model_keys = ("period_years", "tech_plus_depreciation", "growth_annualized", "log_human_capital")
    model_kwargs = {k: overrides.pop(k) for k in model_keys if k in overrides}
    if args.period_years is not None:
        model_kwargs["period_years"] = args.period_years
    if args.tech_plus_depreciation is not None:
        model_kwargs["tech_plus_depreciation"] = args.tech_plus_depreciation
    if args.total_growth:
        model_kwargs["growth_annualized"] = False
    if args.raw_human_capital:
        model_kwargs["log_human_capital"] = False
    if model_kwargs:
        overrides["model"] = ModelConfig(**model_kwargs)
    unknown = set(overrides) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
    if "taus" in overrides:
        overrides["taus"] = tuple(float(t) for t in overrides["taus"])
    if "rho_grid" in overrides and overrides["rho_grid"] is not None:
        overrides["rho_grid"] = tuple(float(r) for r in overrides["rho_grid"])
    cfg = RunConfig(**overrides)
    run_pipeline(cfg)
    print(cfg.output_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betaquant",
        description="Conditional growth-convergence models at arbitrary quantiles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_weights = sub.add_parser("weights", help="spatial weight matrices")
    wsub = p_weights.add_subparsers(dest="weights_command", required=True)
    p_wb = wsub.add_parser("build", help="build k-nearest-neighbour weights from a dataset")
    p_wb.add_argument("--input", default=None, help="dataset CSV (default: bundled demo data)")
    p_wb.add_argument("--k", type=int, default=5)
    p_wb.add_argument("--output", default="weights.txt")
    p_wb.set_defaults(func=_cmd_weights_build)

    p_fit = sub.add_parser("fit", help="fit a model at one quantile")
    fsub = p_fit.add_subparsers(dest="fit_command", required=True)

    p_qr = fsub.add_parser("qr", help="plain quantile regression")
    p_qr.add_argument("--input", default=None)
    p_qr.add_argument("--tau", type=float, default=0.5)
    p_qr.add_argument("--output", default=None, help="JSON path (default: stdout)")
    _add_ci_flags(p_qr)
    _add_model_flags(p_qr)
    p_qr.set_defaults(func=_cmd_fit_qr)

    p_sqr = fsub.add_parser("sqr", help="spatial-lag quantile regression")
    p_sqr.add_argument("--input", default=None)
    p_sqr.add_argument("--tau", type=float, default=0.5)
    p_sqr.add_argument("--estimator", choices=("ivqr", "dsqr"), default="ivqr")
    p_sqr.add_argument("--rho-grid", default=None, help="candidate grid as lo:hi:step")
    p_sqr.add_argument("--k", type=int, default=5, help="weight-matrix neighbours")
    p_sqr.add_argument("--output", default=None, help="JSON path (default: stdout)")
    _add_ci_flags(p_sqr)
    _add_model_flags(p_sqr)
    p_sqr.set_defaults(func=_cmd_fit_sqr)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    p_sim.add_argument("--n", type=int, default=187)
    p_sim.add_argument("--countries", type=int, default=12)
    p_sim.add_argument("--rho", type=float, default=0.4)
    p_sim.add_argument("--theta", default=None, help="comma-separated structural coefficients (5)")
    p_sim.add_argument("--noise", type=float, default=0.002)
    p_sim.add_argument("--seed", type=int, default=7)
    p_sim.add_argument("--layout", choices=("blobs", "uniform"), default="blobs")
    p_sim.add_argument("--profile", choices=("constant", "upper-tail"), default="constant")
    p_sim.add_argument("--high-rho", type=float, default=0.8)
    p_sim.add_argument("--threshold", type=float, default=0.75)
    p_sim.add_argument("--output", default="synthetic.csv")
    p_sim.set_defaults(func=_cmd_simulate)

    p_cl = sub.add_parser("cluster", help="classify regions by upper-quantile residuals")
    p_cl.add_argument("--input", default=None)
    p_cl.add_argument("--tau-u", type=float, default=0.90)
    p_cl.add_argument("--k", type=int, default=3, help="number of classes")
    p_cl.add_argument("--scheme", choices=("equal-width", "equal-count"), default="equal-width")
    p_cl.add_argument("--source", choices=("qr", "sqr"), default="qr")
    p_cl.add_argument("--estimator", choices=("ivqr", "dsqr"), default="ivqr")
    p_cl.add_argument("--k-neighbors", type=int, default=5)
    p_cl.add_argument("--output", default="clusters.csv")
    p_cl.add_argument("--summary", default=None, help="summary JSON path (default: stdout)")
    _add_model_flags(p_cl)
    p_cl.set_defaults(func=_cmd_cluster)

    p_rep = sub.add_parser("report", help="emit figure plot data from a report")
    p_rep.add_argument("--report", required=True, help="report.json from a pipeline run")
    p_rep.add_argument("--which", choices=("figure1", "figure2", "figure3"), required=True)
    p_rep.add_argument("--output", default="plot_data.csv")
    p_rep.set_defaults(func=_cmd_report)

    p_pl = sub.add_parser("pipeline", help="run the full analysis")
    p_pl.add_argument("--config", default=None, help="JSON config file; flags win")
    p_pl.add_argument("--input", default=None)
    p_pl.add_argument("--output-dir", default=None)
    p_pl.add_argument("--k", type=int, default=None)
    p_pl.add_argument("--taus", default=None, help="comma-separated quantiles")
    p_pl.add_argument("--estimator", choices=("ivqr", "dsqr"), default=None)
    p_pl.add_argument("--rho-grid", default=None, help="lo:hi:step")
    p_pl.add_argument("--ci", choices=("bootstrap", "sandwich"), default=None)
    p_pl.add_argument("--level", type=float, default=None)
    p_pl.add_argument("--reps", type=int, default=None)
    p_pl.add_argument("--seed", type=int, default=None)
    p_pl.add_argument("--tau-u", type=float, default=None)
    p_pl.add_argument("--cluster-k", type=int, default=None)
    p_pl.add_argument("--scheme", choices=("equal-width", "equal-count"), default=None)
    p_pl.add_argument("--source", choices=("qr", "sqr"), default=None)
    p_pl.add_argument("--workers", type=int, default=None)
    p_pl.add_argument("--period-years", type=float, default=None)
    p_pl.add_argument("--tech-plus-depreciation", type=float, default=None)
    p_pl.add_argument("--total-growth", action="store_true")
    p_pl.add_argument("--raw-human-capital", action="store_true")
    p_pl.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # classified exit codes; unexpected bugs re-raise
        code = _classify(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

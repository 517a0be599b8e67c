"""End-to-end run: load, weights, fits, intervals, speeds, clusters, report.

The pipeline computes everything in memory, assembles a report whose numbers
all come from fit objects, and only then writes files.  Numeric output is
formatted to 6 significant digits at emission and serialized with sorted
keys, so two runs with the same configuration and seed produce byte-identical
report JSON.  Wall-clock timings are written to a separate sidecar file to
keep the report itself deterministic.
"""

import importlib.metadata
import importlib.resources
import json
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np
import scipy

from ._validation import check_level, check_tau, check_tau_grid
from .clusters import ClusterAssignment, classify_residuals, cluster_report, write_assignment_csv
from .data import DESIGN_COLUMNS, ModelConfig, build_design, load_dataset
from .errors import BetaquantError, ConfigError, DomainError, PipelineError
from .inference import IntervalSet, bootstrap_intervals, convergence_speed, sandwich_intervals
from .quantile import OlsFit, QuantileFit, default_tau_grid, fit_ols, fit_quantile
from .spatial import SpatialQuantileFit, fit_spatial_process, rho_profile_interval
from .weights import build_knn_weights

BETA_COLUMN = "log_initial_gdp"
BUNDLED_DATASET = "synthetic_regions_187.csv"


def bundled_dataset_path() -> str:
    """Filesystem path of the packaged demo dataset."""
    return str(importlib.resources.files("betaquant.datasets") / BUNDLED_DATASET)


@dataclass(frozen=True)
class RunConfig:
    """Validated pipeline configuration; every range is checked up front.

    Parameters
    ----------
    input_path : str or None
        CSV to analyze; None selects the bundled demo dataset.
    output_dir : str
        Directory receiving report and CSV outputs (created if missing).
    k_neighbors : int
        Neighbour count for the spatial weights.
    taus : tuple of float
        Quantile grid (strictly increasing, inside (0, 1)).
    estimator : str
        Spatial estimator, ``"ivqr"`` or ``"dsqr"``.
    rho_grid : tuple of float or None
        Candidate spatial parameters (grid estimator); None for the default.
    ci_method : str
        Interval method for the non-spatial quantile fits
        (``"bootstrap"`` or ``"sandwich"``); spatial coefficient intervals
        always use the sandwich with the spatial parameter held fixed.
    level : float
        Confidence level.
    replicates : int
        Bootstrap replicate count.
    seed : int
        Bootstrap seed.
    cluster_tau_u : float
        Upper quantile whose residuals are clustered.
    cluster_k : int
        Number of residual classes.
    cluster_scheme : str
        ``"equal-width"`` or ``"equal-count"``.
    cluster_source : str
        ``"qr"`` (non-spatial residuals) or ``"sqr"`` (spatial residuals).
    workers : int
        Worker processes for bootstrap replicates.
    model : ModelConfig
        Growth-accounting conventions.
    """

    input_path: str | None = None
    output_dir: str = "out"
    k_neighbors: int = 5
    taus: tuple[float, ...] = tuple(float(t) for t in default_tau_grid())
    estimator: str = "ivqr"
    rho_grid: tuple[float, ...] | None = None
    ci_method: str = "bootstrap"
    level: float = 0.90
    replicates: int = 999
    seed: int = 0
    cluster_tau_u: float = 0.90
    cluster_k: int = 3
    cluster_scheme: str = "equal-width"
    cluster_source: str = "qr"
    workers: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        check_tau_grid(np.asarray(self.taus))
        check_tau(self.cluster_tau_u)
        check_level(self.level)
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.estimator not in ("ivqr", "dsqr"):
            raise ConfigError(f"estimator must be 'ivqr' or 'dsqr', got {self.estimator!r}")
        if self.rho_grid is not None:
            grid = tuple(float(r) for r in self.rho_grid)
            object.__setattr__(self, "rho_grid", grid)
            if not grid or any(abs(r) >= 1 for r in grid):
                raise ConfigError("rho_grid values must lie strictly inside (-1, 1)")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("rho_grid must be strictly increasing")
        if self.ci_method not in ("bootstrap", "sandwich"):
            raise ConfigError(f"ci_method must be 'bootstrap' or 'sandwich', got {self.ci_method!r}")
        if self.replicates < 200:
            raise ConfigError(f"replicates must be >= 200, got {self.replicates}")
        if self.cluster_k < 2:
            raise ConfigError(f"cluster_k must be >= 2, got {self.cluster_k}")
        if self.cluster_scheme not in ("equal-width", "equal-count"):
            raise ConfigError(f"unknown cluster scheme {self.cluster_scheme!r}")
        if self.cluster_source not in ("qr", "sqr"):
            raise ConfigError(f"cluster_source must be 'qr' or 'sqr', got {self.cluster_source!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @property
    def convention(self) -> str:
        return "annualized-g" if self.model.growth_annualized else "total-g"

    def describe(self) -> dict:
        out = {}
        for f in fields(self):
            # Execution details that cannot change the numbers are omitted so
            # reports from equivalent runs compare byte-identical.
            if f.name in ("output_dir", "workers"):
                continue
            value = getattr(self, f.name)
            if f.name == "model":
                value = {
                    "period_years": self.model.period_years,
                    "tech_plus_depreciation": self.model.tech_plus_depreciation,
                    "growth_annualized": self.model.growth_annualized,
                    "log_human_capital": self.model.log_human_capital,
                }
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


@dataclass(frozen=True)
class Report:
    """Everything a run produced, referencing the fit objects directly."""

    config: RunConfig
    columns: tuple[str, ...]
    ols: OlsFit
    ols_intervals: dict
    qr: dict[float, QuantileFit]
    qr_intervals: dict[float, IntervalSet]
    spatial: dict[float, SpatialQuantileFit]
    spatial_intervals: dict[float, IntervalSet]
    spatial_failures: dict[float, str]
    rho_intervals: dict[float, tuple[float, float] | None]
    speeds: dict
    assignment: ClusterAssignment
    cluster_summary: dict
    metadata: dict

    def beta_index(self) -> int:
        return self.columns.index(BETA_COLUMN)

    def as_dict(self) -> dict:
        """Plain serializable structure; formatting happens in the writer."""
        j = self.beta_index()

        def interval_dict(iv: IntervalSet) -> dict:
            return {
                "method": iv.method,
                "level": iv.level,
                "bounds": iv.as_dict(),
            }

        quantile_block = {}
        for tau, fit in self.qr.items():
            key = format(tau, ".6g")
            quantile_block[key] = {
                "coefficients": dict(zip(self.columns, fit.coefficients)),
                "beta": float(fit.coefficients[j]),
                "objective": fit.objective,
                "intervals": interval_dict(self.qr_intervals[tau]),
                "speed": self.speeds["quantile"].get(tau),
            }

        spatial_block = {}
        for tau, fit in self.spatial.items():
            key = format(tau, ".6g")
            rho_iv = self.rho_intervals.get(tau)
            spatial_block[key] = {
                "estimator": fit.estimator,
                "rho": float(fit.rho),
                "rho_interval": list(rho_iv) if rho_iv is not None else None,
                "coefficients": dict(zip(self.columns, fit.coefficients)),
                "beta": float(fit.coefficients[j]),
                "criterion": fit.meta.get("criterion"),
                "intervals": interval_dict(self.spatial_intervals[tau]),
                "speed": self.speeds["spatial"].get(tau),
            }

        return {
            "config": self.config.describe(),
            "columns": list(self.columns),
            "ols": {
                "coefficients": dict(zip(self.columns, self.ols.coefficients)),
                "beta": float(self.ols.coefficients[j]),
                "intervals": self.ols_intervals,
                "speed": self.speeds["ols"],
            },
            "quantile": quantile_block,
            "spatial": spatial_block,
            "spatial_failures": {
                format(t, ".6g"): msg for t, msg in self.spatial_failures.items()
            },
            "rho_profile": [
                [tau, float(self.spatial[tau].rho)] for tau in sorted(self.spatial)
            ],
            "clusters": self.cluster_summary,
            "metadata": self.metadata,
        }


def _round6(obj):
    """Recursively format floats at 6 significant digits for emission."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return float(format(obj, ".6g"))
    if isinstance(obj, np.floating):
        return float(format(float(obj), ".6g"))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__} into the report")


def render_report_json(report: Report) -> str:
    """Deterministic JSON text for a report (sorted keys, 6 significant digits)."""
    return json.dumps(_round6(report.as_dict()), sort_keys=True, indent=2) + "\n"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def _speed_entry(beta: float, cfg: RunConfig) -> dict:
    try:
        sp = convergence_speed(beta, cfg.model.period_years, cfg.convention)
        return {"beta": sp.beta, "lam": sp.lam, "convention": sp.convention}
    except DomainError as exc:
        return {"beta": float(beta), "lam": None, "error": str(exc)}


def run_pipeline(cfg: RunConfig) -> Report:
    """Execute every stage and write the outputs.

    Stages run sequentially: load, weights, least squares, quantile process,
    spatial process, intervals, speeds, clusters, and emission.  A failure in
    any stage raises :class:`PipelineError` naming the stage; nothing is
    written unless every stage succeeded, and a failed write removes any
    files it had already produced.

    Returns
    -------
    Report
        The assembled report (also written to ``report.json`` along with
        coefficient, cluster, and plot-data CSVs plus a timing sidecar).
    """
    timings: dict[str, float] = {}

    def stage(name, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        timings[name] = time.perf_counter() - start
        return result

    def _load():
        path = cfg.input_path or bundled_dataset_path()
        ds = load_dataset(path)
        design = build_design(ds, cfg.model)
        return ds, design

    ds, design = stage("load", _load)
    W = stage("weights", lambda: build_knn_weights(ds, k=cfg.k_neighbors))
    X, g, columns = design.matrix, design.outcome, design.columns

    ols = stage("least-squares", lambda: fit_ols(X, g, columns=columns))

    def _qr():
        taus = sorted(set(cfg.taus) | {cfg.cluster_tau_u})
        return {t: fit_quantile(X, g, t, columns=columns) for t in taus}

    qr = stage("quantile-process", _qr)

    def _spatial():
        return fit_spatial_process(
            X, g, W,
            taus=np.asarray(cfg.taus),
            estimator=cfg.estimator,
            grid=np.asarray(cfg.rho_grid) if cfg.rho_grid is not None else None,
            columns=columns,
        )

    spatial, spatial_failures = stage("spatial-process", _spatial)

    def _intervals():
        qr_iv = {}
        # Every fitted quantile gets bounds, including a cluster source
        # quantile that sits outside the configured grid.
        for t in sorted(qr):
            if cfg.ci_method == "bootstrap":
                qr_iv[t] = bootstrap_intervals(
                    X, g, t,
                    B=cfg.replicates,
                    level=cfg.level,
                    seed=cfg.seed,
                    workers=cfg.workers,
                    columns=columns,
                )
            else:
                qr_iv[t] = sandwich_intervals(qr[t], X, level=cfg.level)
        sp_iv = {}
        rho_iv = {}
        for t, fit in spatial.items():
            sp_iv[t] = sandwich_intervals(fit, X, level=cfg.level)
            try:
                rho_iv[t] = rho_profile_interval(fit, level=cfg.level)
            except BetaquantError:
                rho_iv[t] = None
        # Classical normal-theory bounds for the least-squares reference row.
        n, p = X.shape
        sigma2 = float(ols.residuals @ ols.residuals) / (n - p)
        cov = sigma2 * np.linalg.inv(X.T @ X)
        from scipy.stats import norm

        z = norm.ppf(0.5 + cfg.level / 2.0)
        se = np.sqrt(np.diag(cov))
        ols_iv = {
            name: {
                "point": float(b),
                "lower": float(b - z * s),
                "upper": float(b + z * s),
            }
            for name, b, s in zip(columns, ols.coefficients, se)
        }
        return qr_iv, sp_iv, rho_iv, ols_iv

    qr_intervals, spatial_intervals, rho_intervals, ols_intervals = stage("intervals", _intervals)

    def _speeds():
        j = columns.index(BETA_COLUMN)
        return {
            "ols": _speed_entry(float(ols.coefficients[j]), cfg),
            "quantile": {t: _speed_entry(float(f.coefficients[j]), cfg) for t, f in qr.items()},
            "spatial": {t: _speed_entry(float(f.coefficients[j]), cfg) for t, f in spatial.items()},
        }

    speeds = stage("speeds", _speeds)

    def _clusters():
        if cfg.cluster_source == "qr":
            residuals = qr[cfg.cluster_tau_u].residuals
            source = {"model": "quantile", "tau": cfg.cluster_tau_u}
        else:
            if cfg.cluster_tau_u in spatial:
                src_fit = spatial[cfg.cluster_tau_u]
            else:
                fits, fails = fit_spatial_process(
                    X, g, W,
                    taus=np.asarray([cfg.cluster_tau_u]),
                    estimator=cfg.estimator,
                    grid=np.asarray(cfg.rho_grid) if cfg.rho_grid is not None else None,
                    columns=columns,
                )
                if cfg.cluster_tau_u not in fits:
                    raise next(iter(fails.values()))
                src_fit = fits[cfg.cluster_tau_u]
            residuals = src_fit.residuals
            source = {
                "model": "spatial",
                "estimator": cfg.estimator,
                "tau": cfg.cluster_tau_u,
            }
        assignment = classify_residuals(
            residuals,
            k=cfg.cluster_k,
            scheme=cfg.cluster_scheme,
            tau_u=cfg.cluster_tau_u,
            region_ids=design.region_ids,
            source=source,
        )
        return assignment, cluster_report(assignment, ds)

    assignment, cluster_summary = stage("clusters", _clusters)

    def _assemble():
        metadata = {
            "package_version": importlib.metadata.version("betaquant"),
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "n_regions": ds.n,
            "n_countries": len(set(ds.countries)),
            "seed": cfg.seed,
            "conventions": {
                "growth": cfg.convention,
                "period_years": cfg.model.period_years,
                "tech_plus_depreciation": cfg.model.tech_plus_depreciation,
                "human_capital_logged": cfg.model.log_human_capital,
            },
            "notes": {
                "non_spatial_intervals": (
                    "xy-pair bootstrap substitutes for rank-test inversion"
                    if cfg.ci_method == "bootstrap"
                    else "kernel sandwich covariance"
                ),
                "spatial_intervals": "sandwich with the spatial parameter held fixed",
                "timings": "wall-clock timings are in the timings.json sidecar",
            },
        }
        return Report(
            config=cfg,
            columns=columns,
            ols=ols,
            ols_intervals=ols_intervals,
            qr=qr,
            qr_intervals=qr_intervals,
            spatial=spatial,
            spatial_intervals=spatial_intervals,
            spatial_failures={t: str(e) for t, e in spatial_failures.items()},
            rho_intervals=rho_intervals,
            speeds=speeds,
            assignment=assignment,
            cluster_summary=cluster_summary,
            metadata=metadata,
        )

    report = stage("assemble", _assemble)
    stage("write", lambda: _write_outputs(report, timings))
    return report


def plot_rows(report_dict: dict, which: str) -> list[tuple]:
    """Long-format rows (model, coefficient, tau, estimate, lower, upper)."""
    if which not in ("figure1", "figure2", "figure3"):
        raise ConfigError(f"which must be figure1|figure2|figure3, got {which!r}")
    rows = []
    if which == "figure1":
        quantile = report_dict.get("quantile") or {}
        if not quantile:
            raise ConfigError("report contains no non-spatial quantile fits")
        for tau_key in sorted(quantile, key=float):
            entry = quantile[tau_key]
            bounds = entry["intervals"]["bounds"]
            for name in report_dict["columns"]:
                b = bounds[name]
                rows.append(("qr", name, float(tau_key), b["point"], b["lower"], b["upper"]))
        for name in report_dict["columns"]:
            iv = report_dict["ols"]["intervals"][name]
            rows.append(("ols", name, None, iv["point"], iv["lower"], iv["upper"]))
        return rows

    spatial = report_dict.get("spatial") or {}
    if not spatial:
        raise ConfigError("report contains no spatial fits")
    for tau_key in sorted(spatial, key=float):
        entry = spatial[tau_key]
        tau = float(tau_key)
        rho_iv = entry.get("rho_interval")
        rho_lo, rho_hi = (rho_iv if rho_iv else (None, None))
        if which == "figure2":
            bounds = entry["intervals"]["bounds"]
            for name in report_dict["columns"]:
                b = bounds[name]
                rows.append(("sqr", name, tau, b["point"], b["lower"], b["upper"]))
        rows.append(("sqr", "rho", tau, entry["rho"], rho_lo, rho_hi))
    return rows


def emit_plot_data(report_dict: dict, which: str, path) -> None:
    """Write one figure's plot data as CSV; see :func:`plot_rows`."""
    rows = plot_rows(report_dict, which)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,coefficient,tau,estimate,lower,upper\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_outputs(report: Report, timings: dict) -> None:
    cfg = report.config
    os.makedirs(cfg.output_dir, exist_ok=True)
    written = []
    try:
        report_dict = _round6(report.as_dict())
        path = os.path.join(cfg.output_dir, "report.json")
        written.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report_dict, sort_keys=True, indent=2) + "\n")

        path = os.path.join(cfg.output_dir, "coefficients.csv")
        written.append(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("model,tau,coefficient,estimate,lower,upper\n")
            for name in report.columns:
                iv = report.ols_intervals[name]
                fh.write(
                    f"ols,,{name},{_fmt(iv['point'])},{_fmt(iv['lower'])},{_fmt(iv['upper'])}\n"
                )
            for t in sorted(report.qr):
                fit = report.qr[t]
                iv = report.qr_intervals.get(t)
                for j, name in enumerate(report.columns):
                    if iv is not None:
                        b = iv.as_dict()[name]
                        lo, hi = b["lower"], b["upper"]
                    else:
                        lo = hi = None
                    fh.write(
                        f"qr,{_fmt(t)},{name},{_fmt(float(fit.coefficients[j]))},"
                        f"{_fmt(lo)},{_fmt(hi)}\n"
                    )
            for t in sorted(report.spatial):
                fit = report.spatial[t]
                iv = report.spatial_intervals[t].as_dict()
                for j, name in enumerate(report.columns):
                    b = iv[name]
                    fh.write(
                        f"sqr,{_fmt(t)},{name},{_fmt(float(fit.coefficients[j]))},"
                        f"{_fmt(b['lower'])},{_fmt(b['upper'])}\n"
                    )
                rho_iv = report.rho_intervals.get(t)
                lo, hi = rho_iv if rho_iv else (None, None)
                fh.write(f"sqr,{_fmt(t)},rho,{_fmt(float(fit.rho))},{_fmt(lo)},{_fmt(hi)}\n")

        path = os.path.join(cfg.output_dir, "clusters.csv")
        written.append(path)
        write_assignment_csv(report.assignment, path)

        path = os.path.join(cfg.output_dir, "plot_data.csv")
        written.append(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("model,coefficient,tau,estimate,lower,upper\n")
            for row in plot_rows(report_dict, "figure1") + plot_rows(report_dict, "figure2"):
                fh.write(",".join(_fmt(v) for v in row) + "\n")

        path = os.path.join(cfg.output_dir, "timings.json")
        written.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"seconds": timings}, sort_keys=True, indent=2) + "\n")
    except Exception:
        for p in written:
            try:
                os.unlink(p)
            except OSError:
                pass
        raise

"""Conditional growth-convergence models at arbitrary quantiles.

Quantile regression for growth-convergence analysis with spatial spillovers:
exact check-loss fits, spatial-lag models estimated by instrumented grid
profiling or double-stage regression, bootstrap and sandwich inference,
convergence-speed transforms, and residual-based region clustering, plus a
reproducible end-to-end pipeline and synthetic generators with closed-form
truth.
"""

from .clusters import ClusterAssignment, classify_residuals, cluster_report
from .data import (
    Dataset,
    DesignMatrix,
    ModelConfig,
    RegionRecord,
    build_design,
    load_dataset,
    write_dataset_csv,
)
from .errors import (
    BetaquantError,
    BoundaryWarning,
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
from .estimators import (
    QuantileGrowthRegressor,
    ResidualIntervalClusterer,
    SpatialQuantileRegressor,
)
from .inference import (
    IntervalSet,
    SpeedOfConvergence,
    beta_from_speed,
    bootstrap_intervals,
    convergence_speed,
    sandwich_covariance,
    sandwich_intervals,
)
from .pipeline import Report, RunConfig, emit_plot_data, run_pipeline
from .quantile import (
    OlsFit,
    QuantileFit,
    check_loss,
    default_tau_grid,
    empirical_quantile,
    fit_ols,
    fit_quantile,
    fit_quantile_process,
)
from .simulate import (
    DgpSpec,
    DgpTruth,
    SimulatedData,
    generate,
    paper_scale_fixture,
    synthetic_dataset,
)
from .spatial import (
    SpatialQuantileFit,
    default_rho_grid,
    fit_dsqr,
    fit_ivqr,
    fit_spatial_process,
    rho_profile_interval,
)
from .weights import (
    InstrumentMatrix,
    WeightMatrix,
    build_instruments,
    build_knn_weights,
    export_coordinate_list,
    spatial_lag,
)

__version__ = "0.1.0"

__all__ = [
    "BetaquantError",
    "BoundaryWarning",
    "ClusterAssignment",
    "ConfigError",
    "ConstructionError",
    "DataValidationError",
    "Dataset",
    "DegenerateClusterError",
    "DesignMatrix",
    "DgpSpec",
    "DgpTruth",
    "DomainError",
    "EstimationError",
    "InferenceError",
    "InstrumentMatrix",
    "IntervalSet",
    "ModelConfig",
    "OlsFit",
    "PipelineError",
    "QuantileFit",
    "QuantileGrowthRegressor",
    "RankDeficiencyError",
    "RegionRecord",
    "Report",
    "ResidualIntervalClusterer",
    "RunConfig",
    "SchemaError",
    "SimulatedData",
    "SpatialQuantileFit",
    "SpatialQuantileRegressor",
    "SpeedOfConvergence",
    "WeightMatrix",
    "beta_from_speed",
    "bootstrap_intervals",
    "build_design",
    "build_instruments",
    "build_knn_weights",
    "check_loss",
    "classify_residuals",
    "cluster_report",
    "convergence_speed",
    "default_rho_grid",
    "default_tau_grid",
    "emit_plot_data",
    "empirical_quantile",
    "export_coordinate_list",
    "fit_dsqr",
    "fit_ivqr",
    "fit_ols",
    "fit_quantile",
    "fit_quantile_process",
    "fit_spatial_process",
    "generate",
    "load_dataset",
    "paper_scale_fixture",
    "rho_profile_interval",
    "run_pipeline",
    "sandwich_covariance",
    "sandwich_intervals",
    "spatial_lag",
    "synthetic_dataset",
    "write_dataset_csv",
]

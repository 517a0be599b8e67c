"""Spatial-lag quantile regression via instrument-grid and double-stage routes.

Both estimators instrument the endogenous spatial lag with the exogenous
covariates and their first two spatial lags.  The grid estimator profiles a
candidate spatial parameter and picks the value at which the instrument
projection loses all explanatory power; the double-stage estimator replaces
the lag with its first-stage fitted values and reads the parameter off the
second-stage coefficient.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector, check_consistent_length, check_tau, check_tau_grid
from .errors import BoundaryWarning, ConfigError, EstimationError, InferenceError
from .inference import sandwich_covariance
from .quantile import QuantileFit, default_tau_grid, fit_quantile
from .weights import WeightMatrix, build_instruments, spatial_lag

RESIDUAL_RECOMPUTE_TOL = 1e-10


def default_rho_grid() -> np.ndarray:
    """Candidate spatial parameters -0.95 to 0.95 in steps of 0.01."""
    return np.arange(-95, 96) / 100.0


@dataclass(frozen=True)
class SpatialQuantileFit:
    """Fitted spatial-lag quantile model at a single quantile.

    Parameters
    ----------
    tau : float
        Quantile level.
    rho : float
        Estimated spatial autoregressive parameter, strictly inside (-1, 1).
    coefficients : ndarray
        Covariate coefficients (the X block only).
    residuals : ndarray
        Structural residuals ``g - rho * Wg - X @ coefficients``.
    estimator : str
        ``"ivqr"`` or ``"dsqr"``.
    grid_profile : ndarray or None
        For the grid estimator, candidate-versus-criterion pairs of shape
        (m, 2); the chosen ``rho`` attains the column minimum.
    auxiliary_coefficient : float or None
        Instrument-projection coefficient at the chosen candidate (grid
        estimator only); near zero at exact identification.
    inner : QuantileFit
        The quantile fit behind the estimate, kept for diagnostics.
    """

    tau: float
    rho: float
    coefficients: np.ndarray
    residuals: np.ndarray
    estimator: str
    grid_profile: np.ndarray | None = None
    auxiliary_coefficient: float | None = None
    inner: QuantileFit | None = None
    columns: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        resid = np.asarray(self.residuals, dtype=float)
        coef.setflags(write=False)
        resid.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "residuals", resid)
        if self.estimator not in ("ivqr", "dsqr"):
            raise ConfigError(f"estimator must be 'ivqr' or 'dsqr', got {self.estimator!r}")
        if not abs(self.rho) < 1.0:
            raise EstimationError(
                f"estimated spatial parameter {self.rho} lies outside (-1, 1); "
                f"the spatial process would be explosive"
            )
        if self.grid_profile is not None:
            profile = np.asarray(self.grid_profile, dtype=float)
            profile.setflags(write=False)
            object.__setattr__(self, "grid_profile", profile)
            j = int(np.argmin(profile[:, 1]))
            if profile[j, 0] != self.rho:
                raise EstimationError(
                    "stored rho does not attain the grid-profile minimum"
                )

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    def verify_residuals(self, X, g, W: WeightMatrix) -> None:
        """Recompute residuals from stored parameters; raise if they drift."""
        X = as_matrix(X, "X")
        g = as_vector(g, "g")
        u = g - self.rho * spatial_lag(W, g) - X @ self.coefficients
        if np.max(np.abs(u - self.residuals)) > RESIDUAL_RECOMPUTE_TOL:
            raise EstimationError("stored residuals do not recompute from (rho, coefficients)")


def _prepare(X, g, W: WeightMatrix, tau: float, columns):
    if hasattr(X, "matrix"):  # a DesignMatrix
        columns = X.columns
        X = X.matrix
    X = as_matrix(X, "X")
    g = as_vector(g, "g")
    check_consistent_length(X, g)
    if X.shape[0] != W.n:
        raise ConfigError(f"X has {X.shape[0]} rows but W is {W.n}x{W.n}")
    tau = check_tau(tau)
    if not columns:
        columns = ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
    Z = build_instruments(X, W, tuple(columns)).values
    Wg = spatial_lag(W, g)
    return X, g, tau, tuple(columns), Z, Wg


def fit_ivqr(
    X,
    g,
    W: WeightMatrix,
    tau: float,
    grid=None,
    columns: tuple[str, ...] = (),
    weighted: bool = True,
    max_iter: int = 200,
) -> SpatialQuantileFit:
    """Grid-profile instrumental quantile estimate of the spatial-lag model.

    For each candidate value the spatial lag is partialled out of the outcome
    and the check-loss fit is augmented with the least-squares projection of
    the lag on the instruments; the candidate minimizing the squared
    standardized projection coefficient is selected.

    Parameters
    ----------
    X : array_like or DesignMatrix, shape (n, p)
        Exogenous design with leading intercept.
    g : array_like, shape (n,)
        Outcome (growth) vector.
    W : WeightMatrix
        Row-standardized spatial weights.
    tau : float
        Quantile level in (0, 1).
    grid : array_like, optional
        Candidate spatial parameters inside (-1, 1); defaults to
        :func:`default_rho_grid`.
    weighted : bool
        Standardize the projection coefficient by its sandwich standard
        error.  If any candidate's standard error is unavailable the whole
        profile falls back to the unweighted squared coefficient, recorded in
        ``meta['criterion']``.

    Returns
    -------
    SpatialQuantileFit
        With the full candidate profile attached.
    """
    X, g, tau, columns, Z, Wg = _prepare(X, g, W, tau, columns)
    grid = default_rho_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("candidate grid must be a non-empty 1-D array")
    if np.max(np.abs(grid)) >= 1.0:
        raise ConfigError("candidate grid must lie strictly inside (-1, 1)")

    # Least-squares projection of the endogenous lag on the instrument set.
    proj_coef, _, _, _ = np.linalg.lstsq(Z, Wg, rcond=None)
    d_hat = Z @ proj_coef
    augmented = np.column_stack([X, d_hat])

    aux = np.empty(grid.size)
    ses = np.empty(grid.size)
    inner_fits: list[QuantileFit] = []
    se_ok = True
    for j, rho_j in enumerate(grid):
        inner = fit_quantile(augmented, g - rho_j * Wg, tau, max_iter=max_iter)
        inner_fits.append(inner)
        aux[j] = inner.coefficients[-1]
        if weighted and se_ok:
            try:
                cov, _ = sandwich_covariance(augmented, inner.residuals, tau)
                ses[j] = np.sqrt(cov[-1, -1])
            except (InferenceError, ConfigError):
                se_ok = False

    if weighted and se_ok and np.all(ses > 0):
        criterion = (aux / ses) ** 2
        criterion_kind = "wald"
    else:
        criterion = aux**2
        criterion_kind = "coefficient-squared"

    j_star = int(np.argmin(criterion))
    if j_star in (0, grid.size - 1) and grid.size > 1:
        warnings.warn(
            f"criterion minimized at grid boundary rho={grid[j_star]}; "
            f"widen the candidate grid",
            BoundaryWarning,
            stacklevel=2,
        )
    rho_hat = float(grid[j_star])
    best = inner_fits[j_star]
    theta = best.coefficients[:-1]
    residuals = g - rho_hat * Wg - X @ theta
    return SpatialQuantileFit(
        tau=tau,
        rho=rho_hat,
        coefficients=theta,
        residuals=residuals,
        estimator="ivqr",
        grid_profile=np.column_stack([grid, criterion]),
        auxiliary_coefficient=float(aux[j_star]),
        inner=best,
        columns=columns,
        meta={"criterion": criterion_kind, "grid_size": int(grid.size)},
    )


def fit_dsqr(
    X,
    g,
    W: WeightMatrix,
    tau: float,
    columns: tuple[str, ...] = (),
    max_iter: int = 200,
) -> SpatialQuantileFit:
    """Double-stage quantile estimate of the spatial-lag model.

    Stage one fits the spatial lag on the instruments at the same quantile;
    stage two fits the outcome on the design augmented with the stage-one
    fitted values, whose coefficient is the spatial parameter estimate.
    """
    X, g, tau, columns, Z, Wg = _prepare(X, g, W, tau, columns)
    stage1 = fit_quantile(Z, Wg, tau, max_iter=max_iter)
    lag_fitted = Z @ stage1.coefficients
    stage2 = fit_quantile(np.column_stack([X, lag_fitted]), g, tau, max_iter=max_iter)
    rho_hat = float(stage2.coefficients[-1])
    theta = stage2.coefficients[:-1]
    residuals = g - rho_hat * Wg - X @ theta
    return SpatialQuantileFit(
        tau=tau,
        rho=rho_hat,
        coefficients=theta,
        residuals=residuals,
        estimator="dsqr",
        inner=stage2,
        columns=columns,
        meta={"stage1_iterations": stage1.n_iterations},
    )


def fit_spatial_process(
    X,
    g,
    W: WeightMatrix,
    taus=None,
    estimator: str = "ivqr",
    grid=None,
    columns: tuple[str, ...] = (),
    weighted: bool = True,
    max_iter: int = 200,
) -> tuple[dict[float, SpatialQuantileFit], dict[float, Exception]]:
    """Fit the spatial model at every quantile in ``taus``.

    Per-quantile failures are collected rather than raised so the remaining
    grid still completes; the second return value maps failed quantiles to
    their exceptions.
    """
    if estimator not in ("ivqr", "dsqr"):
        raise ConfigError(f"estimator must be 'ivqr' or 'dsqr', got {estimator!r}")
    taus = default_tau_grid() if taus is None else check_tau_grid(taus)
    fits: dict[float, SpatialQuantileFit] = {}
    failures: dict[float, Exception] = {}
    for t in taus:
        t = float(t)
        try:
            if estimator == "ivqr":
                fits[t] = fit_ivqr(
                    X, g, W, t, grid=grid, columns=columns, weighted=weighted, max_iter=max_iter
                )
            else:
                fits[t] = fit_dsqr(X, g, W, t, columns=columns, max_iter=max_iter)
        except (EstimationError, InferenceError) as exc:
            failures[t] = exc
    return fits, failures


def rho_profile_interval(fit: SpatialQuantileFit, level: float = 0.90) -> tuple[float, float]:
    """Confidence interval for the spatial parameter by profile inversion.

    Collects the grid candidates whose Wald criterion stays below the
    chi-squared(1) critical value at ``level``.  Requires a grid fit with the
    Wald-weighted criterion.
    """
    from scipy.stats import chi2

    if fit.grid_profile is None:
        raise InferenceError("profile interval requires a grid-estimator fit")
    if fit.meta.get("criterion") != "wald":
        raise InferenceError(
            "profile interval requires the Wald-weighted criterion; "
            "this fit fell back to the unweighted profile"
        )
    crit = chi2.ppf(level, df=1)
    inside = fit.grid_profile[fit.grid_profile[:, 1] <= crit, 0]
    if inside.size == 0:
        return fit.rho, fit.rho
    return float(inside.min()), float(inside.max())

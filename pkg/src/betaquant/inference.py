"""Confidence intervals, sandwich covariance, and the convergence-speed map.

Two interval routes are provided.  ``bootstrap_intervals`` resamples (x, y)
pairs with per-replicate indexed RNG streams, so results are identical no
matter how replicates are scheduled.  ``sandwich_intervals`` uses the
kernel-based sparsity sandwich with a Hall–Sheather bandwidth (Bofinger
fallback).  ``convergence_speed`` converts a slope on initial income into the
implied speed at which the gap to steady state closes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._validation import (
    as_matrix,
    as_vector,
    check_consistent_length,
    check_level,
    check_tau,
)
from .errors import ConfigError, ConstructionError, DomainError, InferenceError, RankDeficiencyError
from .quantile import QuantileFit, fit_quantile

MIN_BOOTSTRAP_REPLICATES = 200
DEFAULT_REPLICATES = 999
MAX_DISCARD_FRACTION = 0.10
MIN_SANDWICH_N = 31

CONVENTIONS = ("annualized-g", "total-g")


@dataclass(frozen=True)
class IntervalSet:
    """Per-coefficient confidence bounds from one inference method.

    Parameters
    ----------
    columns : tuple of str
        Coefficient names, parallel to the bound arrays.
    point : ndarray
        Point estimates the intervals are centred on.
    lower, upper : ndarray
        Bounds at the stated confidence level.
    method : str
        ``"bootstrap"`` or ``"sandwich"``.
    level : float
        Confidence level in (0, 1).
    tau : float or None
        Quantile of the underlying fit, if any.
    meta : dict
        Method-specific details (replicate counts, bandwidths, ...).
    """

    columns: tuple[str, ...]
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    method: str
    level: float
    tau: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        for arr in (point, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.method not in ("bootstrap", "sandwich"):
            raise ConstructionError(f"unknown interval method {self.method!r}")
        check_level(self.level)
        if not (len(self.columns) == point.shape[0] == lower.shape[0] == upper.shape[0]):
            raise ConstructionError("interval arrays and column names must align")
        if np.any(lower > point + 1e-15) or np.any(upper < point - 1e-15):
            raise ConstructionError("each interval must contain its point estimate")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {
            name: {"point": float(p), "lower": float(lo), "upper": float(hi)}
            for name, p, lo, hi in zip(self.columns, self.point, self.lower, self.upper)
        }


@dataclass(frozen=True)
class SpeedOfConvergence:
    """Implied speed at which the gap to the steady state closes.

    ``lam`` is the continuous-time rate recovered from the initial-income
    slope ``beta`` over a period of ``T`` years, under the stated growth
    convention.
    """

    beta: float
    T: float
    lam: float
    convention: str

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}, got {self.convention!r}")
        if not (math.isfinite(self.beta) and math.isfinite(self.lam)):
            raise ConstructionError("beta and lam must be finite")
        if (self.beta == 0.0) != (self.lam == 0.0):
            raise ConstructionError("lam must be zero exactly when beta is zero")

    @property
    def half_life(self) -> float:
        """Years for half the gap to close: ln(2) / lam (inf when lam = 0)."""
        return math.inf if self.lam == 0 else math.log(2.0) / self.lam


def convergence_speed(beta: float, T: float, convention: str = "annualized-g") -> SpeedOfConvergence:
    """Map an initial-income slope to the implied convergence speed.

    Under the total-growth convention ``lam = -ln(1 + beta) / T``; when the
    outcome is annualized growth the slope is scaled by ``T`` first:
    ``lam = -ln(1 + beta * T) / T``.
    """
    if convention not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    beta = float(beta)
    T = float(T)
    if not (T > 0 and math.isfinite(T)):
        raise ConfigError(f"T must be a positive finite period length, got {T}")
    arg = 1.0 + (beta * T if convention == "annualized-g" else beta)
    if arg <= 0:
        raise DomainError(
            f"log argument {arg} <= 0: beta={beta} too negative for T={T} under {convention}"
        )
    lam = -math.log(arg) / T
    if beta == 0.0:
        lam = 0.0
    return SpeedOfConvergence(beta=beta, T=T, lam=lam, convention=convention)


def beta_from_speed(lam: float, T: float, convention: str = "annualized-g") -> float:
    """Exact inverse of :func:`convergence_speed` for the given convention."""
    if convention not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    if not (T > 0 and math.isfinite(T)):
        raise ConfigError(f"T must be a positive finite period length, got {T}")
    shrink = math.expm1(-float(lam) * T)  # e^{-lam T} - 1
    return shrink / T if convention == "annualized-g" else shrink


def _hall_sheather_bandwidth(n: int, tau: float, level: float) -> float:
    z_a = stats.norm.ppf(0.5 + level / 2.0)
    z_t = stats.norm.ppf(tau)
    phi = stats.norm.pdf(z_t)
    return n ** (-1.0 / 3.0) * z_a ** (2.0 / 3.0) * (
        1.5 * phi**2 / (2.0 * z_t**2 + 1.0)
    ) ** (1.0 / 3.0)


def _bofinger_bandwidth(n: int, tau: float) -> float:
    z_t = stats.norm.ppf(tau)
    phi = stats.norm.pdf(z_t)
    return n ** (-0.2) * (4.5 * phi**4 / (2.0 * z_t**2 + 1.0) ** 2) ** 0.2


def _residual_scale_bandwidth(residuals: np.ndarray, tau: float, h_tau: float) -> float:
    """Convert a quantile-space bandwidth to the residual scale."""
    h_tau = min(h_tau, 0.99 * tau, 0.99 * (1.0 - tau))
    iqr = np.subtract(*np.percentile(residuals, [75, 25]))
    kappa = min(float(np.std(residuals)), float(iqr) / 1.349)
    return kappa * (stats.norm.ppf(tau + h_tau) - stats.norm.ppf(tau - h_tau))


def sandwich_covariance(X, residuals, tau: float, level: float = 0.90) -> tuple[np.ndarray, dict]:
    """Kernel sandwich covariance of quantile-regression coefficients.

    The middle matrix is ``tau (1 - tau) X'X / n`` and the bread inverts the
    density-weighted Gram matrix ``(1/nh) sum K(u_i/h) x_i x_i'`` with an
    Epanechnikov kernel.  The bandwidth follows the Hall–Sheather rule; if the
    implied density matrix is degenerate the Bofinger rule is tried, and a
    second failure raises :class:`InferenceError`.

    Returns the covariance of the coefficient vector (already scaled by 1/n)
    together with a meta dict recording the bandwidth path.
    """
    X = as_matrix(X, "X")
    u = as_vector(residuals, "residuals")
    check_consistent_length(X, u)
    tau = check_tau(tau)
    check_level(level)
    n, p = X.shape
    if n < MIN_SANDWICH_N:
        raise ConfigError(f"sandwich covariance is asymptotic; need n > 30, got {n}")

    omega = X.T @ X / n
    eig_floor = 1e-12

    last_error = None
    for rule, h_tau in (
        ("hall-sheather", _hall_sheather_bandwidth(n, tau, level)),
        ("bofinger", _bofinger_bandwidth(n, tau)),
    ):
        h = _residual_scale_bandwidth(u, tau, h_tau)
        if not (h > 0 and math.isfinite(h)):
            last_error = f"{rule} bandwidth degenerate (h={h})"
            continue
        t = u / h
        kernel = np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t**2), 0.0)
        density = (X.T * kernel) @ X / (n * h)
        eigvals = np.linalg.eigvalsh(density)
        if eigvals[0] <= eig_floor * max(1.0, eigvals[-1]):
            last_error = f"{rule} density matrix degenerate (min eigenvalue {eigvals[0]:.3e})"
            continue
        bread = np.linalg.inv(density)
        cov = tau * (1.0 - tau) / n * (bread @ omega @ bread)
        return cov, {"bandwidth_rule": rule, "bandwidth": h, "kernel": "epanechnikov"}

    raise InferenceError(f"sandwich covariance failed after bandwidth fallback: {last_error}")


def sandwich_intervals(fit, X, level: float = 0.90) -> IntervalSet:
    """Gaussian-quantile intervals from the kernel sandwich covariance.

    ``fit`` may be a plain quantile fit or a spatial fit; for the latter the
    estimated spatial parameter is held fixed, so the covariance describes the
    covariate block conditionally on it (recorded in ``meta``).
    """
    X = as_matrix(X, "X")
    check_level(level)
    spatial = hasattr(fit, "rho")
    coef = np.asarray(fit.coefficients, dtype=float)
    if X.shape[1] != coef.shape[0]:
        raise ConfigError(f"X has {X.shape[1]} columns but fit has {coef.shape[0]} coefficients")
    cov, meta = sandwich_covariance(X, fit.residuals, fit.tau, level)
    se = np.sqrt(np.diag(cov))
    z = stats.norm.ppf(0.5 + level / 2.0)
    meta = dict(meta, standard_errors=tuple(float(s) for s in se))
    if spatial:
        meta["spatial_rho_fixed"] = float(fit.rho)
    columns = tuple(fit.columns) if fit.columns else tuple(f"x{j}" for j in range(coef.shape[0]))
    return IntervalSet(
        columns=columns,
        point=coef,
        lower=coef - z * se,
        upper=coef + z * se,
        method="sandwich",
        level=level,
        tau=fit.tau,
        meta=meta,
    )


def _bootstrap_replicate(args) -> np.ndarray | None:
    X, y, tau, seed, b, max_iter = args
    rng = np.random.default_rng([seed, b])
    idx = rng.integers(0, y.shape[0], y.shape[0])
    try:
        return fit_quantile(X[idx], y[idx], tau, max_iter=max_iter).coefficients
    except RankDeficiencyError:
        return None


def bootstrap_intervals(
    X,
    g,
    tau: float,
    B: int = DEFAULT_REPLICATES,
    level: float = 0.90,
    seed: int = 0,
    workers: int = 1,
    columns: tuple[str, ...] = (),
    max_iter: int = 200,
) -> IntervalSet:
    """Percentile intervals from an (x, y)-pair bootstrap of the quantile fit.

    Each replicate draws its own RNG stream from ``(seed, replicate_index)``,
    so the result is reproducible and independent of ``workers``.  Resamples
    with a rank-deficient design are discarded; more than 10% discards raises
    :class:`InferenceError`.
    """
    X = as_matrix(X, "X")
    y = as_vector(g, "g")
    check_consistent_length(X, y)
    tau = check_tau(tau)
    check_level(level)
    if B < MIN_BOOTSTRAP_REPLICATES:
        raise ConfigError(f"need at least {MIN_BOOTSTRAP_REPLICATES} replicates, got {B}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    base = fit_quantile(X, y, tau, columns=columns, max_iter=max_iter)
    jobs = [(X, y, tau, int(seed), b, max_iter) for b in range(B)]
    if workers == 1:
        draws = [_bootstrap_replicate(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(_bootstrap_replicate, jobs, chunksize=64))

    kept = np.array([d for d in draws if d is not None])
    discarded = B - kept.shape[0]
    if discarded > MAX_DISCARD_FRACTION * B:
        raise InferenceError(
            f"{discarded}/{B} bootstrap resamples were rank deficient (> 10% discarded)"
        )

    alpha = (1.0 - level) / 2.0
    lower = np.quantile(kept, alpha, axis=0)
    upper = np.quantile(kept, 1.0 - alpha, axis=0)
    # Percentile bounds can miss the full-sample estimate in small samples;
    # containment is part of the interval contract, so widen minimally.
    clamped = bool(np.any(lower > base.coefficients) or np.any(upper < base.coefficients))
    lower = np.minimum(lower, base.coefficients)
    upper = np.maximum(upper, base.coefficients)
    return IntervalSet(
        columns=base.columns,
        point=base.coefficients,
        lower=lower,
        upper=upper,
        method="bootstrap",
        level=level,
        tau=tau,
        meta={
            "replicates": int(B),
            "discarded": int(discarded),
            "seed": int(seed),
            "resampling": "xy-pair",
            "clamped_to_point": clamped,
            "non_spatial_substitution": "percentile bootstrap in place of rank-test inversion",
        },
    )


def interval_set_for_fit(fit: QuantileFit, X, method: str, **kwargs) -> IntervalSet:
    """Route to the requested interval method for a plain quantile fit."""
    if method == "sandwich":
        return sandwich_intervals(fit, X, level=kwargs.get("level", 0.90))
    if method == "bootstrap":
        y = X @ fit.coefficients + fit.residuals
        return bootstrap_intervals(X, y, fit.tau, columns=tuple(fit.columns), **kwargs)
    raise ConfigError(f"unknown interval method {method!r}")

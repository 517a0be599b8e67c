"""Quantile regression via exact linear programming, plus a least-squares twin.

The check-loss minimizer is found by solving the dual linear program with the
HiGHS simplex backend: maximize ``y'a`` subject to ``X'a = 0`` and
``a_i in [tau - 1, tau]``.  The coefficient vector is the (negated) vector of
equality-constraint multipliers at the optimum, and the duality gap provides a
machine-checkable certificate of optimality.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._validation import (
    as_matrix,
    as_vector,
    check_consistent_length,
    check_full_column_rank,
    check_tau,
    check_tau_grid,
)
from .errors import ConfigError, EstimationError

DUALITY_GAP_RTOL = 1e-9
DEFAULT_MAX_ITER = 200


def check_loss(residuals, tau: float) -> float:
    """Asymmetric absolute loss: ``sum(r * (tau - 1[r < 0]))``."""
    r = as_vector(residuals, "residuals")
    tau = check_tau(tau)
    return float(np.sum(r * (tau - (r < 0))))


def empirical_quantile(values, tau: float) -> float:
    """Left-continuous inverse of the empirical distribution function.

    Returns the smallest sample value whose cumulative probability reaches
    ``tau``: ``sorted(values)[ceil(n * tau) - 1]``.
    """
    v = np.sort(as_vector(values, "values"))
    tau = check_tau(tau)
    n = v.shape[0]
    if n == 0:
        raise ConfigError("empirical quantile of an empty sample is undefined")
    # ceil with a backlash for float noise in n * tau (e.g. 10 * 0.3 > 3).
    idx = int(np.ceil(n * tau - 1e-9)) - 1
    return float(v[max(idx, 0)])


def default_tau_grid() -> np.ndarray:
    """Nineteen quantile levels 0.05, 0.10, ..., 0.95."""
    return np.round(np.arange(1, 20) * 0.05, 10)


@dataclass(frozen=True)
class QuantileFit:
    """Solved quantile regression at a single quantile.

    Construction re-checks the subgradient optimality condition and the
    duality-gap certificate; an inconsistent fit cannot be instantiated.
    The residual sign counts ``n_neg`` and ``n_zero`` (at tolerance
    ``1e-8 * max(1, max|residual|)``) are derived during construction and
    exposed as read-only attributes.
    """

    tau: float
    coefficients: np.ndarray
    residuals: np.ndarray
    objective: float
    dual_objective: float
    n_iterations: int
    columns: tuple[str, ...] = ()
    objective_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        resid = np.asarray(self.residuals, dtype=float)
        coef.setflags(write=False)
        resid.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "residuals", resid)
        n = resid.shape[0]
        p = coef.shape[0]

        scale = max(1.0, float(np.max(np.abs(resid))) if n else 1.0)
        zero_tol = 1e-8 * scale
        n_zero = int(np.sum(np.abs(resid) <= zero_tol))
        n_neg = int(np.sum(resid < -zero_tol))
        object.__setattr__(self, "n_zero", n_zero)
        object.__setattr__(self, "n_neg", n_neg)
        target = n * self.tau
        # Subgradient optimality at a check-loss minimum; a basic LP solution
        # additionally has at least p exactly-fit observations.
        assert n_neg <= target + 1e-9 and target <= n_neg + n_zero + 1e-9, (
            f"subgradient condition violated: {n_neg} <= {target} <= "
            f"{n_neg + n_zero} fails at tau={self.tau}"
        )
        assert n_zero >= min(p, n), (
            f"basic solution must interpolate >= {min(p, n)} points, got {n_zero}"
        )
        # The largest dual objective any feasible multiplier can reach is
        # sum|y|, which bounds the solver's reporting error scale.
        gap = abs(self.objective - self.dual_objective)
        assert gap <= DUALITY_GAP_RTOL * max(1.0, abs(self.objective), self.objective_scale), (
            f"duality gap {gap:.3e} exceeds certificate tolerance"
        )

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.coefficients.shape[0]:
            raise ConfigError(
                f"X has {X.shape[1]} columns, fit has {self.coefficients.shape[0]}"
            )
        return X @ self.coefficients


@dataclass(frozen=True)
class OlsFit:
    """Least-squares companion fit with identical field layout where sensible."""

    coefficients: np.ndarray
    residuals: np.ndarray
    objective: float
    columns: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        resid = np.asarray(self.residuals, dtype=float)
        coef.setflags(write=False)
        resid.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "residuals", resid)

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        return X @ self.coefficients


def fit_quantile(
    X,
    y,
    tau: float,
    columns: tuple[str, ...] = (),
    max_iter: int = DEFAULT_MAX_ITER,
) -> QuantileFit:
    """Minimize the check loss exactly over linear predictors.

    Parameters
    ----------
    X : array_like of shape (n, p)
        Design matrix with full column rank; include the intercept explicitly.
    y : array_like of shape (n,)
        Response vector.
    tau : float
        Quantile level in (0, 1).
    columns : tuple of str, optional
        Column names carried through to the fit for reporting.
    max_iter : int
        Simplex iteration cap; exhaustion raises :class:`EstimationError`.

    Returns
    -------
    QuantileFit
        Exact solution with optimality certificates validated on construction.
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    check_consistent_length(X, y)
    tau = check_tau(tau)
    check_full_column_rank(X, "X")
    n, p = X.shape
    if n < p + 1:
        raise ConfigError(f"need at least p+1 = {p + 1} observations, got {n}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")

    # Solve at unit outcome scale so the solver's absolute tolerances act
    # relatively; the optimal basis is scale-invariant, so coefficients and
    # the dual objective rescale exactly.
    scale = float(np.max(np.abs(y))) or 1.0
    res = linprog(
        -y / scale,
        A_eq=X.T,
        b_eq=np.zeros(p),
        bounds=[(tau - 1.0, tau)] * n,
        method="highs",
        options={"maxiter": int(max_iter)},
    )
    if res.status == 1:
        raise EstimationError(
            f"quantile solver hit the iteration cap max_iter={max_iter} at tau={tau}"
        )
    if not res.success:
        raise EstimationError(f"quantile solver failed at tau={tau}: {res.message}")

    coefficients = -scale * np.asarray(res.eqlin.marginals, dtype=float)
    residuals = y - X @ coefficients
    n_iterations = int(res.nit)
    meta = {"solver": "highs-dual", "status": int(res.status)}

    # When n * tau is integral the minimizer set can be a segment and the
    # equality marginals may name an interior point of it.  Re-solving the
    # primal form returns a vertex of that face: same objective, but with
    # the >= p exactly-fit observations every basic solution carries.
    zero_tol = 1e-8 * max(1.0, float(np.max(np.abs(residuals))))
    if int(np.sum(np.abs(residuals) <= zero_tol)) < min(p, n):
        vertex = linprog(
            np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)]),
            A_eq=np.hstack([X, np.eye(n), -np.eye(n)]),
            b_eq=y / scale,
            bounds=[(None, None)] * p + [(0.0, None)] * (2 * n),
            method="highs",
            options={"maxiter": int(max_iter)},
        )
        if vertex.status == 1:
            raise EstimationError(
                f"quantile solver hit the iteration cap max_iter={max_iter} at tau={tau}"
            )
        if not vertex.success:
            raise EstimationError(
                f"quantile solver failed at tau={tau}: {vertex.message}"
            )
        coefficients = scale * np.asarray(vertex.x[:p], dtype=float)
        residuals = y - X @ coefficients
        n_iterations += int(vertex.nit)
        meta["vertex_polish"] = True

    objective = check_loss(residuals, tau)
    return QuantileFit(
        tau=tau,
        coefficients=coefficients,
        residuals=residuals,
        objective=objective,
        dual_objective=scale * float(-res.fun),
        n_iterations=n_iterations,
        columns=tuple(columns) if columns else tuple(f"x{j}" for j in range(p)),
        objective_scale=float(np.sum(np.abs(y))),
        meta=meta,
    )


def fit_ols(X, y, columns: tuple[str, ...] = ()) -> OlsFit:
    """Ordinary least squares on the same design, for mean-based comparison."""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    check_consistent_length(X, y)
    check_full_column_rank(X, "X")
    coefficients, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ coefficients
    return OlsFit(
        coefficients=coefficients,
        residuals=residuals,
        objective=float(residuals @ residuals),
        columns=tuple(columns) if columns else tuple(f"x{j}" for j in range(X.shape[1])),
    )


def fit_quantile_process(
    X,
    y,
    taus=None,
    columns: tuple[str, ...] = (),
    max_iter: int = DEFAULT_MAX_ITER,
) -> dict[float, QuantileFit]:
    """Fit the same design at every quantile in ``taus``.

    The default grid runs 0.05 to 0.95 in steps of 0.05.  Fits are
    independent across quantile levels; any failure propagates tagged
    with the offending level.
    """
    taus = default_tau_grid() if taus is None else check_tau_grid(taus)
    return {
        float(t): fit_quantile(X, y, float(t), columns=columns, max_iter=max_iter)
        for t in taus
    }

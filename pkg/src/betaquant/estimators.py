"""Scikit-learn style wrappers around the functional estimation core.

These classes follow the fit/predict/get_params protocol so the models drop
into pipelines, grid searches, and cross-validation tooling.  They accept
covariates WITHOUT an intercept column (one is added internally, matching
scikit-learn convention) and expose fitted state through trailing-underscore
attributes; the underlying fit objects are available as ``fit_``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .clusters import classify_residuals
from .errors import ConfigError
from .quantile import fit_quantile
from .spatial import fit_dsqr, fit_ivqr
from .weights import WeightMatrix, build_knn_weights


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


class QuantileGrowthRegressor(RegressorMixin, BaseEstimator):
    """Linear conditional-quantile model fit by exact check-loss minimization.

    Parameters
    ----------
    tau : float, default=0.5
        Quantile level in (0, 1).
    max_iter : int, default=200
        Iteration cap for the underlying solver.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Slope coefficients.
    intercept_ : float
        Intercept term.
    fit_ : QuantileFit
        Full fit object with residuals and optimality certificates.

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X = rng.normal(size=(100, 2))
    >>> y = 1.0 + X @ [0.5, -0.25] + rng.normal(size=100)
    >>> model = QuantileGrowthRegressor(tau=0.5).fit(X, y)
    >>> model.predict(X[:2]).shape
    (2,)
    """

    def __init__(self, tau: float = 0.5, max_iter: int = 200):
        self.tau = tau
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = _with_intercept(X)
        self.fit_ = fit_quantile(design, y, self.tau, max_iter=self.max_iter)
        self.intercept_ = float(self.fit_.coefficients[0])
        self.coef_ = self.fit_.coefficients[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(f"X has {X.shape[1]} features, fit used {self.n_features_in_}")
        return self.intercept_ + X @ self.coef_


class SpatialQuantileRegressor(BaseEstimator):
    """Spatial-lag conditional-quantile model with instrumented estimation.

    The endogenous spatial lag of the outcome is handled by either the
    grid-profile instrumental estimator or the double-stage estimator.
    Spatial structure comes from planar coordinates passed to ``fit`` (a
    k-nearest-neighbour weight matrix is built) or from a prebuilt
    :class:`~betaquant.weights.WeightMatrix`.

    Parameters
    ----------
    tau : float, default=0.5
        Quantile level.
    estimator : str, default="ivqr"
        ``"ivqr"`` (grid profile) or ``"dsqr"`` (double stage).
    n_neighbors : int, default=5
        Neighbour count when weights are built from coordinates.
    grid : array-like or None
        Candidate spatial parameters for the grid estimator.
    max_iter : int, default=200
        Solver iteration cap.

    Attributes
    ----------
    rho_ : float
        Estimated spatial autoregressive parameter.
    coef_ : ndarray
        Covariate slopes; ``intercept_`` holds the constant.
    fit_ : SpatialQuantileFit
        Full fit with the candidate profile (grid estimator).
    """

    def __init__(
        self,
        tau: float = 0.5,
        estimator: str = "ivqr",
        n_neighbors: int = 5,
        grid=None,
        max_iter: int = 200,
    ):
        self.tau = tau
        self.estimator = estimator
        self.n_neighbors = n_neighbors
        self.grid = grid
        self.max_iter = max_iter

    def fit(self, X, y, coords=None, weights: WeightMatrix | None = None):
        X, y = check_X_y(X, y, y_numeric=True)
        if (coords is None) == (weights is None):
            raise ConfigError("provide exactly one of coords or weights")
        W = weights if weights is not None else build_knn_weights(
            np.asarray(coords, dtype=float), k=self.n_neighbors
        )
        design = _with_intercept(X)
        if self.estimator == "ivqr":
            self.fit_ = fit_ivqr(design, y, W, self.tau, grid=self.grid, max_iter=self.max_iter)
        elif self.estimator == "dsqr":
            self.fit_ = fit_dsqr(design, y, W, self.tau, max_iter=self.max_iter)
        else:
            raise ConfigError(f"estimator must be 'ivqr' or 'dsqr', got {self.estimator!r}")
        self.rho_ = float(self.fit_.rho)
        self.intercept_ = float(self.fit_.coefficients[0])
        self.coef_ = self.fit_.coefficients[1:]
        self.weights_ = W
        self.n_features_in_ = X.shape[1]
        return self

    def predict_structural(self, X, lagged_outcome):
        """Conditional quantile given covariates and the spatial lag of the outcome."""
        check_is_fitted(self, "fit_")
        X = check_array(X)
        lagged = np.asarray(lagged_outcome, dtype=float)
        return self.rho_ * lagged + self.intercept_ + X @ self.coef_


class ResidualIntervalClusterer(ClusterMixin, BaseEstimator):
    """Cluster regions by residual depth under an upper-quantile fit.

    Fits the plain quantile model at ``tau_u`` and cuts its residuals into
    ``n_clusters`` ordered classes.

    Parameters
    ----------
    tau_u : float, default=0.9
        Upper quantile of the reference fit.
    n_clusters : int, default=3
        Number of residual classes.
    scheme : str, default="equal-width"
        Binning scheme, ``"equal-width"`` or ``"equal-count"``.

    Attributes
    ----------
    labels_ : ndarray of int
        Zero-based class labels (0 = deepest below the quantile surface).
    assignment_ : ClusterAssignment
        Native assignment object with boundaries and one-based classes.
    """

    def __init__(self, tau_u: float = 0.9, n_clusters: int = 3, scheme: str = "equal-width"):
        self.tau_u = tau_u
        self.n_clusters = n_clusters
        self.scheme = scheme

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = _with_intercept(X)
        qfit = fit_quantile(design, y, self.tau_u)
        self.assignment_ = classify_residuals(
            qfit.residuals,
            k=self.n_clusters,
            scheme=self.scheme,
            tau_u=self.tau_u,
            source={"model": "quantile", "tau": self.tau_u},
        )
        self.labels_ = self.assignment_.classes - 1
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        """Fit on (X, y) and return the zero-based class labels."""
        # The mixin default drops y, but the reference fit needs the outcome.
        return self.fit(X, y).labels_

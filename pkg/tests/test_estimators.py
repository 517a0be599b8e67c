"""Scikit-learn protocol wrappers: params, cloning, fit/predict behaviour."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from betaquant.errors import ConfigError
from betaquant.estimators import (
    QuantileGrowthRegressor,
    ResidualIntervalClusterer,
    SpatialQuantileRegressor,
)
from betaquant.quantile import fit_quantile
from betaquant.weights import build_knn_weights


def _sample(n=120, seed=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 2))
    y = 1.0 + X @ np.array([0.5, -0.25]) + rng.standard_normal(n)
    return X, y


def _spatial_sample(rho=0.4, n=80, seed=14):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 10, size=(n, 2))
    W = build_knn_weights(coords, k=5)
    X = rng.uniform(-1, 1, size=(n, 2))
    theta = np.array([1.0, 2.0, -1.5])
    design = np.column_stack([np.ones(n), X])
    g = np.linalg.solve(np.eye(n) - rho * W.matrix.toarray(), design @ theta)
    return X, g, coords, W, theta


# ---------------------------------------------------------------------------
# QuantileGrowthRegressor


def test_qr_params_and_clone():
    model = QuantileGrowthRegressor(tau=0.25, max_iter=150)
    assert model.get_params() == {"tau": 0.25, "max_iter": 150}
    twin = clone(model)
    assert twin.get_params() == model.get_params()
    model.set_params(tau=0.75)
    assert model.tau == 0.75


def test_qr_fit_matches_functional_core():
    X, y = _sample()
    model = QuantileGrowthRegressor(tau=0.3).fit(X, y)
    direct = fit_quantile(np.column_stack([np.ones(len(y)), X]), y, 0.3)
    assert model.intercept_ == pytest.approx(direct.coefficients[0], abs=1e-12)
    np.testing.assert_allclose(model.coef_, direct.coefficients[1:], atol=1e-12)
    assert model.fit_.tau == 0.3
    assert model.n_features_in_ == 2


def test_qr_predict():
    X, y = _sample()
    model = QuantileGrowthRegressor().fit(X, y)
    pred = model.predict(X[:5])
    np.testing.assert_allclose(pred, model.intercept_ + X[:5] @ model.coef_)
    assert np.isfinite(model.score(X, y))
    with pytest.raises(ConfigError, match="features"):
        model.predict(X[:, :1])


def test_qr_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        QuantileGrowthRegressor().predict(np.zeros((3, 2)))


def test_qr_refit_after_clone():
    X, y = _sample(seed=2)
    model = QuantileGrowthRegressor(tau=0.5).fit(X, y)
    twin = clone(model).fit(X, y)
    np.testing.assert_array_equal(model.coef_, twin.coef_)


# ---------------------------------------------------------------------------
# SpatialQuantileRegressor


def test_spatial_fit_from_coords_recovers_truth():
    X, g, coords, _, theta = _spatial_sample()
    model = SpatialQuantileRegressor(tau=0.5).fit(X, g, coords=coords)
    assert model.rho_ == pytest.approx(0.4, abs=1e-12)
    assert model.intercept_ == pytest.approx(theta[0], abs=1e-6)
    np.testing.assert_allclose(model.coef_, theta[1:], atol=1e-6)


def test_spatial_fit_accepts_prebuilt_weights():
    X, g, coords, W, _ = _spatial_sample()
    a = SpatialQuantileRegressor().fit(X, g, coords=coords)
    b = SpatialQuantileRegressor().fit(X, g, weights=W)
    assert a.rho_ == b.rho_
    np.testing.assert_array_equal(a.coef_, b.coef_)


def test_spatial_requires_exactly_one_structure_input():
    X, g, coords, W, _ = _spatial_sample()
    with pytest.raises(ConfigError, match="exactly one"):
        SpatialQuantileRegressor().fit(X, g)
    with pytest.raises(ConfigError, match="exactly one"):
        SpatialQuantileRegressor().fit(X, g, coords=coords, weights=W)


def test_spatial_dsqr_and_bad_estimator():
    X, g, _, W, _ = _spatial_sample()
    model = SpatialQuantileRegressor(estimator="dsqr").fit(X, g, weights=W)
    assert model.fit_.estimator == "dsqr"
    assert abs(model.rho_ - 0.4) < 0.05
    with pytest.raises(ConfigError, match="estimator"):
        SpatialQuantileRegressor(estimator="ols").fit(X, g, weights=W)


def test_spatial_grid_passthrough():
    X, g, _, W, _ = _spatial_sample()
    model = SpatialQuantileRegressor(grid=[0.2, 0.4, 0.6]).fit(X, g, weights=W)
    assert model.fit_.meta["grid_size"] == 3
    assert model.rho_ == 0.4


def test_spatial_structural_prediction():
    X, g, _, W, _ = _spatial_sample()
    model = SpatialQuantileRegressor().fit(X, g, weights=W)
    lag = W.matrix @ g
    pred = model.predict_structural(X, lag)
    np.testing.assert_allclose(pred, g, atol=1e-5)


# ---------------------------------------------------------------------------
# ResidualIntervalClusterer


def test_clusterer_labels():
    X, y = _sample(n=90, seed=5)
    model = ResidualIntervalClusterer(tau_u=0.9, n_clusters=3).fit(X, y)
    assert model.labels_.min() >= 0 and model.labels_.max() <= 2
    np.testing.assert_array_equal(model.labels_, model.assignment_.classes - 1)
    assert model.assignment_.tau_u == 0.9
    assert model.assignment_.source["tau"] == 0.9
    deepest = int(np.argmin(model.assignment_.residuals))
    assert model.labels_[deepest] == 0


def test_clusterer_fit_predict_and_scheme():
    X, y = _sample(n=90, seed=6)
    labels = ResidualIntervalClusterer(n_clusters=4, scheme="equal-count").fit_predict(X, y)
    assert labels.shape == (90,)
    assert set(np.unique(labels)) <= {0, 1, 2, 3}
    counts = np.bincount(labels, minlength=4)
    assert counts.sum() == 90


def test_clusterer_params():
    model = ResidualIntervalClusterer(tau_u=0.8, n_clusters=5, scheme="equal-count")
    assert clone(model).get_params() == {
        "tau_u": 0.8,
        "n_clusters": 5,
        "scheme": "equal-count",
    }

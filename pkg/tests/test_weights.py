"""Nearest-neighbour weight matrices, spatial lags, and instrument stacks."""

import numpy as np
import pytest
from scipy import sparse

from betaquant.errors import ConfigError, ConstructionError, RankDeficiencyError
from betaquant.weights import (
    InstrumentMatrix,
    WeightMatrix,
    build_instruments,
    build_knn_weights,
    export_coordinate_list,
    spatial_lag,
)

COLLINEAR = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])


def test_collinear_points_k1_tie_rule():
    # Hand-enumerated neighbours; equidistant candidates resolve to the
    # lower index, so the middle points both pick their left neighbour.
    W = build_knn_weights(COLLINEAR, k=1).matrix.toarray()
    expected = np.zeros((4, 4))
    expected[0, 1] = 1.0
    expected[1, 0] = 1.0
    expected[2, 1] = 1.0
    expected[3, 2] = 1.0
    np.testing.assert_allclose(W, expected)


def test_collinear_points_k2():
    W = build_knn_weights(COLLINEAR, k=2).matrix.toarray()
    expected = np.zeros((4, 4))
    expected[0, [1, 2]] = 0.5
    expected[1, [0, 2]] = 0.5
    expected[2, [1, 3]] = 0.5
    expected[3, [1, 2]] = 0.5
    np.testing.assert_allclose(W, expected)


def test_duplicate_coordinates_never_error():
    coords = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    W = build_knn_weights(coords, k=2)
    sums = np.asarray(W.matrix.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums, 1.0)


def test_complete_graph_when_k_is_n_minus_1():
    rng = np.random.default_rng(3)
    coords = rng.uniform(0, 10, size=(6, 2))
    W = build_knn_weights(coords, k=5).matrix.toarray()
    expected = (np.ones((6, 6)) - np.eye(6)) / 5.0
    np.testing.assert_allclose(W, expected)


def test_knn_structural_invariants():
    rng = np.random.default_rng(11)
    coords = rng.uniform(0, 10, size=(40, 2))
    W = build_knn_weights(coords, k=5)
    m = W.matrix
    assert np.all(m.diagonal() == 0)
    assert m.data.min() > 0
    np.testing.assert_allclose(np.asarray(m.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    assert np.all(np.diff(m.indptr) == 5)


def test_build_rejects_small_or_bad_inputs():
    with pytest.raises(ConstructionError, match="k\\+1"):
        build_knn_weights(COLLINEAR, k=4)
    with pytest.raises(ConstructionError, match="k must be"):
        build_knn_weights(COLLINEAR, k=0)
    with pytest.raises(ConstructionError, match="shape"):
        build_knn_weights(np.zeros((4, 3)), k=1)
    with pytest.raises(ConfigError, match="finite"):
        build_knn_weights(np.array([[0.0, np.nan], [1.0, 0.0]]), k=1)


def test_weight_matrix_construction_checks():
    good = build_knn_weights(COLLINEAR, k=2)
    with pytest.raises(ConstructionError, match="square"):
        WeightMatrix(sparse.csr_matrix(np.ones((2, 3))), k=1)
    with pytest.raises(ConstructionError, match="non-negative"):
        WeightMatrix(sparse.csr_matrix(-good.matrix.toarray()), k=2)
    with pytest.raises(ConstructionError, match="diagonal"):
        WeightMatrix(sparse.csr_matrix(np.eye(3)), k=1)
    with pytest.raises(ConstructionError, match="row sums"):
        WeightMatrix(2.0 * good.matrix, k=2)
    with pytest.raises(ConstructionError, match="exactly k=3"):
        WeightMatrix(good.matrix, k=3)


def test_spatial_lag_complete_graph_example():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    W = build_knn_weights(coords, k=2)
    np.testing.assert_allclose(spatial_lag(W, [0.0, 3.0, 6.0]), [4.5, 3.0, 1.5])


def test_spatial_lag_of_constant_is_constant():
    rng = np.random.default_rng(5)
    W = build_knn_weights(rng.uniform(0, 10, size=(25, 2)), k=4)
    np.testing.assert_allclose(spatial_lag(W, np.full(25, 3.7)), 3.7, atol=1e-12)
    np.testing.assert_allclose(spatial_lag(W, np.zeros(25)), 0.0)


def test_spatial_lag_is_linear():
    rng = np.random.default_rng(6)
    W = build_knn_weights(rng.uniform(0, 10, size=(30, 2)), k=5)
    x, y = rng.normal(size=30), rng.normal(size=30)
    lhs = spatial_lag(W, 2.0 * x - 3.0 * y)
    rhs = 2.0 * spatial_lag(W, x) - 3.0 * spatial_lag(W, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_spatial_lag_length_mismatch():
    W = build_knn_weights(COLLINEAR, k=1)
    with pytest.raises(ConfigError, match="length mismatch"):
        spatial_lag(W, np.zeros(3))


def test_instruments_column_count_and_values():
    rng = np.random.default_rng(8)
    n = 30
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 4))])
    W = build_knn_weights(rng.uniform(0, 10, size=(n, 2)), k=5)
    Z = build_instruments(X, W)
    # p_x = 5 exogenous columns -> 5 + 4 + 4 = 13 instruments.
    assert Z.n_columns == 13
    np.testing.assert_allclose(Z.values[:, :5], X)
    np.testing.assert_allclose(Z.values[:, 5:9], W.matrix @ X[:, 1:])
    np.testing.assert_allclose(Z.values[:, 9:13], W.matrix @ (W.matrix @ X[:, 1:]))
    assert Z.columns[5].startswith("lag_")
    assert Z.columns[9].startswith("lag2_")


def test_instruments_constant_covariate_rank_error():
    rng = np.random.default_rng(9)
    n = 25
    X = np.column_stack([np.ones(n), np.full(n, 2.0), rng.normal(size=n)])
    W = build_knn_weights(rng.uniform(0, 10, size=(n, 2)), k=4)
    with pytest.raises(RankDeficiencyError, match="singular value"):
        build_instruments(X, W, columns=("intercept", "constant_cov", "x2"))


def test_instruments_require_leading_intercept():
    rng = np.random.default_rng(10)
    n = 20
    X = rng.normal(size=(n, 3))
    W = build_knn_weights(rng.uniform(0, 10, size=(n, 2)), k=3)
    with pytest.raises(ConfigError, match="intercept"):
        build_instruments(X, W)


def test_instrument_matrix_name_width_check():
    with pytest.raises(ConfigError, match="column names"):
        InstrumentMatrix(values=np.ones((3, 2)), columns=("a",))


def test_spectral_radius_keeps_spatial_solves_stable():
    rng = np.random.default_rng(12)
    W = build_knn_weights(rng.uniform(0, 10, size=(50, 2)), k=5)
    A = np.eye(50) - 0.95 * W.matrix.toarray()
    x = rng.normal(size=50)
    solved = np.linalg.solve(A, x)
    np.testing.assert_allclose(A @ solved, x, atol=1e-10)


def test_export_coordinate_list_round_trip(tmp_path):
    W = build_knn_weights(COLLINEAR, k=2)
    path = tmp_path / "weights.txt"
    export_coordinate_list(W, path)
    rebuilt = np.zeros((4, 4))
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 1 + 8  # header plus n * k entries
    for line in lines[1:]:
        i, j, v = line.split()
        rebuilt[int(i), int(j)] = float(v)
    np.testing.assert_allclose(rebuilt, W.matrix.toarray())

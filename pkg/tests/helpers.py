"""Shared test utilities: brute-force oracles and random problem factories."""

import itertools

import numpy as np

from betaquant.quantile import check_loss


def brute_force_objective(X, y, tau):
    """Exact check-loss optimum by enumerating every exact-fit subset.

    With generic continuous data the optimum of the piecewise-linear check
    loss is attained at a vertex interpolating exactly as many observations
    as the design has columns, so scanning all such subsets visits a global
    minimizer.  Singular subsets are skipped; every survivor gives an upper
    bound and the best one is the optimum.
    """
    n, p = X.shape
    rows = np.array(list(itertools.combinations(range(n), p)))
    subs = X[rows]
    keep = np.abs(np.linalg.det(subs)) > 1e-12
    # Trailing axis keeps the stacked solve unambiguous for 2-D rhs.
    thetas = np.linalg.solve(subs[keep], y[rows[keep]][..., None])[..., 0]
    residuals = y[None, :] - thetas @ X.T
    losses = np.sum(residuals * (tau - (residuals < 0)), axis=1)
    best = float(np.min(losses))
    # Guard against vectorization drift: re-evaluate the winner scalar-wise.
    j = int(np.argmin(losses))
    assert abs(check_loss(residuals[j], tau) - best) < 1e-12
    return best


def random_instance(rng, n=None, n_columns=None):
    """Continuous random design with a leading intercept, plus an outcome."""
    if n is None:
        n = int(rng.integers(8, 31))
    if n_columns is None:
        n_columns = int(rng.integers(1, 4))
    if n_columns == 1:
        X = np.ones((n, 1))
    else:
        X = np.column_stack([np.ones(n), rng.uniform(-2.0, 2.0, size=(n, n_columns - 1))])
    gamma = rng.uniform(-1.0, 1.0, n_columns)
    y = X @ gamma + rng.normal(0.0, 1.0, n)
    return X, y

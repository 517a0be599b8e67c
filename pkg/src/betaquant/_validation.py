"""Input validation helpers shared across the package."""

import numpy as np

from .errors import ConfigError, RankDeficiencyError


def as_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-d float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ConfigError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    return arr


def check_tau(tau: float, name: str = "tau") -> float:
    """Require a quantile level strictly inside (0, 1)."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"{name} must lie strictly inside (0, 1), got {tau}")
    return tau


def check_level(level: float) -> float:
    """Require a confidence level strictly inside (0, 1)."""
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie inside (0, 1), got {level}")
    return level


def check_consistent_length(*arrays) -> int:
    """Require matching first dimensions; return the common length."""
    lengths = {np.asarray(a).shape[0] for a in arrays}
    if len(lengths) != 1:
        raise ConfigError(f"inconsistent first dimensions: {sorted(lengths)}")
    return lengths.pop()


def check_full_column_rank(X: np.ndarray, name: str = "X") -> None:
    """Raise :class:`RankDeficiencyError` when columns are numerically dependent."""
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        smallest = float(np.linalg.svd(X, compute_uv=False)[-1])
        raise RankDeficiencyError(
            f"{name} is rank deficient: rank {rank} < {X.shape[1]} columns "
            f"(smallest singular value {smallest:.3e})"
        )


def check_tau_grid(taus, name: str = "taus") -> np.ndarray:
    """Require a strictly increasing grid of quantile levels inside (0, 1)."""
    grid = as_vector(taus, name)
    if grid.size == 0:
        raise ConfigError(f"{name} must not be empty")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ConfigError(f"{name} must lie strictly inside (0, 1)")
    if grid.size > 1 and np.any(np.diff(grid) <= 0.0):
        raise ConfigError(f"{name} must be strictly increasing")
    return grid

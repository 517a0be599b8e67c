"""K-nearest-neighbour spatial weights and the spatially lagged instrument set."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import qr as qr_factor

from ._validation import as_matrix, as_vector
from .data import Dataset, DesignMatrix
from .errors import ConfigError, ConstructionError, RankDeficiencyError

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightMatrix:
    """Row-standardized sparse spatial connectivity matrix.

    Each row holds weight ``1/k`` on the region's ``k`` nearest neighbours and
    zero elsewhere (in particular on the diagonal).
    """

    matrix: sparse.csr_matrix
    k: int
    row_standardized: bool = True

    def __post_init__(self):
        m = self.matrix.tocsr()
        object.__setattr__(self, "matrix", m)
        n = m.shape[0]
        if m.shape[0] != m.shape[1]:
            raise ConstructionError(f"weight matrix must be square, got {m.shape}")
        if m.nnz and m.data.min() < 0:
            raise ConstructionError("weights must be non-negative")
        if np.any(m.diagonal() != 0):
            raise ConstructionError("weight matrix must have a zero diagonal")
        if self.row_standardized:
            row_sums = np.asarray(m.sum(axis=1)).ravel()
            if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
                raise ConstructionError("row sums deviate from 1 beyond tolerance")
            counts = np.diff(m.indptr)
            if np.any(counts != self.k):
                raise ConstructionError(
                    f"every row must have exactly k={self.k} neighbours, "
                    f"found counts in [{counts.min()}, {counts.max()}]"
                )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def lag(self, x: np.ndarray) -> np.ndarray:
        """Alias for :func:`spatial_lag` on this matrix."""
        return spatial_lag(self, x)


@dataclass(frozen=True)
class InstrumentMatrix:
    """Exogenous covariates stacked with their first and second spatial lags."""

    values: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[1] != len(self.columns):
            raise ConfigError("instrument column names do not match matrix width")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


def _coords_of(source) -> np.ndarray:
    if isinstance(source, Dataset):
        return np.asarray(source.coords, dtype=float)
    return as_matrix(source, "coordinates")


def build_knn_weights(source, k: int = 5) -> WeightMatrix:
    """Build row-standardized k-nearest-neighbour weights from planar coordinates.

    ``source`` is a :class:`Dataset` or an (n, 2) coordinate array. Distance
    ties are broken toward the lower region index, which makes builds
    deterministic; duplicate coordinates are therefore legal.
    """
    coords = _coords_of(source)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ConstructionError(f"coordinates must have shape (n, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ConstructionError("coordinates must be finite")
    n = coords.shape[0]
    k = int(k)
    if k < 1:
        raise ConstructionError(f"k must be >= 1, got {k}")
    if n < k + 1:
        raise ConstructionError(f"need at least k+1 = {k + 1} regions, got {n}")

    # Exact O(n^2) neighbour search; the lexicographic (distance, index) order
    # encodes the tie rule, which KD-tree queries cannot guarantee.
    diff = coords[:, None, :] - coords[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    indices = np.empty((n, k), dtype=np.int64)
    col_order = np.arange(n)
    for i in range(n):
        order = np.lexsort((col_order, dist2[i]))
        order = order[order != i]
        indices[i] = order[:k]

    indptr = np.arange(0, n * k + 1, k)
    data = np.full(n * k, 1.0 / k)
    col = np.sort(indices, axis=1).ravel()
    matrix = sparse.csr_matrix((data, col, indptr), shape=(n, n))
    return WeightMatrix(matrix=matrix, k=k, row_standardized=True)


def spatial_lag(W: WeightMatrix, x) -> np.ndarray:
    """Weighted average of each region's neighbours: the product W @ x."""
    vec = as_vector(x, "x")
    if vec.shape[0] != W.n:
        raise ConfigError(f"length mismatch: W is {W.n}x{W.n}, x has length {vec.shape[0]}")
    return W.matrix @ vec


def build_instruments(X, W: WeightMatrix, columns: tuple[str, ...] | None = None) -> InstrumentMatrix:
    """Stack the exogenous design with its first and second spatial lags.

    The intercept column (which must come first) is excluded from the lagged
    blocks: under row standardization its lag is the same constant column and
    would force rank deficiency.
    """
    if isinstance(X, DesignMatrix):
        columns = X.columns
        X = X.matrix
    X = as_matrix(X, "X")
    if columns is None:
        columns = ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
    if X.shape[0] != W.n:
        raise ConfigError(f"row mismatch: X has {X.shape[0]} rows, W is {W.n}x{W.n}")
    if not W.row_standardized:
        raise ConfigError("instrument construction requires a row-standardized W")
    if not np.allclose(X[:, 0], 1.0):
        raise ConfigError("X must carry the intercept as its first column")

    lagged = W.matrix @ X[:, 1:]
    twice_lagged = W.matrix @ lagged
    Z = np.column_stack([X, lagged, twice_lagged])
    names = (
        tuple(columns)
        + tuple(f"lag_{c}" for c in columns[1:])
        + tuple(f"lag2_{c}" for c in columns[1:])
    )

    rank = np.linalg.matrix_rank(Z)
    if rank < Z.shape[1]:
        smallest = float(np.linalg.svd(Z, compute_uv=False)[-1])
        # Pivoted QR: columns pivoted past the numerical rank are the culprits.
        _, _, pivots = qr_factor(Z, mode="economic", pivoting=True)
        offending = sorted(names[j] for j in pivots[rank:])
        raise RankDeficiencyError(
            f"instrument matrix is rank deficient (smallest singular value "
            f"{smallest:.3e}); offending columns: {', '.join(offending)}"
        )
    return InstrumentMatrix(values=Z, columns=names)


def export_coordinate_list(W: WeightMatrix, path) -> None:
    """Write the weights as text triplets: row index, column index, weight."""
    coo = W.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# row col weight\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")

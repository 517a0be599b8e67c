"""Group regions by how far they sit below an upper conditional quantile.

Residuals from a fit at an upper quantile (default 0.90) are cut into ``k``
ordered classes; class 1 collects the regions deepest below the estimated
quantile surface and class ``k`` those closest to (or above) it.  Two cutting
schemes are provided: equal-width bins over the residual range, and
equal-count bins at empirical residual quantiles.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, check_tau
from .data import Dataset
from .errors import ConfigError, ConstructionError, DataValidationError, DegenerateClusterError
from .quantile import empirical_quantile

SCHEMES = ("equal-width", "equal-count")


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of regions into ordered residual classes.

    Parameters
    ----------
    tau_u : float
        Upper quantile of the source fit.
    k : int
        Number of classes.
    scheme : str
        ``"equal-width"`` or ``"equal-count"``.
    boundaries : tuple of float
        The k - 1 strictly increasing residual cut points.
    region_ids : tuple of str
        Region identifiers, parallel to ``residuals`` and ``classes``.
    residuals : ndarray
        Source-fit residuals.
    classes : ndarray of int
        Class index 1..k per region; non-decreasing in the residual.
    source : dict
        Provenance of the residuals (model family, estimator, tau).
    """

    tau_u: float
    k: int
    scheme: str
    boundaries: tuple[float, ...]
    region_ids: tuple[str, ...]
    residuals: np.ndarray
    classes: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        residuals = np.asarray(self.residuals, dtype=float)
        classes = np.asarray(self.classes, dtype=int)
        residuals.setflags(write=False)
        classes.setflags(write=False)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "boundaries", tuple(float(b) for b in self.boundaries))
        object.__setattr__(self, "region_ids", tuple(self.region_ids))
        n = residuals.shape[0]
        if not (len(self.region_ids) == n == classes.shape[0]):
            raise ConstructionError("region ids, residuals, and classes must align")
        if len(self.boundaries) != self.k - 1:
            raise ConstructionError(f"expected {self.k - 1} boundaries, got {len(self.boundaries)}")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ConstructionError("boundaries must be strictly increasing")
        if classes.min() < 1 or classes.max() > self.k:
            raise ConstructionError("class indices must lie in 1..k")
        order = np.argsort(residuals, kind="stable")
        if np.any(np.diff(classes[order]) < 0):
            raise ConstructionError("classes must be non-decreasing in the residual")

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def mapping(self) -> dict[str, int]:
        return dict(zip(self.region_ids, (int(c) for c in self.classes)))

    def counts(self) -> tuple[int, ...]:
        """Per-class sizes, length k, summing to n."""
        return tuple(int(np.sum(self.classes == c)) for c in range(1, self.k + 1))


def classify_residuals(
    residuals,
    k: int = 3,
    scheme: str = "equal-width",
    tau_u: float = 0.90,
    region_ids: tuple[str, ...] | None = None,
    source: dict | None = None,
) -> ClusterAssignment:
    """Cut residuals into k ordered classes.

    Equal-width boundaries sit at ``min + j (max - min) / k``; intervals are
    left-closed with the top interval closed on both sides.  Equal-count
    boundaries sit at the empirical residual quantiles ``j / k``; each
    boundary value closes its lower class, so distinct residuals split as
    evenly as the sample allows.

    Raises
    ------
    DegenerateClusterError
        If the residuals cannot support k distinct classes (all values
        identical, or tied quantile boundaries).
    """
    r = as_vector(residuals, "residuals")
    tau_u = check_tau(tau_u)
    k = int(k)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if r.shape[0] < k:
        raise ConfigError(f"need at least k={k} residuals, got {r.shape[0]}")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if region_ids is None:
        region_ids = tuple(f"obs{i}" for i in range(r.shape[0]))
    if len(region_ids) != r.shape[0]:
        raise ConfigError("region_ids must match residual length")

    lo, hi = float(r.min()), float(r.max())
    if lo == hi:
        raise DegenerateClusterError(
            f"all {r.shape[0]} residuals equal {lo}; cannot form {k} classes"
        )

    if scheme == "equal-width":
        boundaries = tuple(lo + j * (hi - lo) / k for j in range(1, k))
        # Left-closed bins: a residual equal to a boundary opens the upper class.
        classes = np.searchsorted(boundaries, r, side="right") + 1
        classes = np.minimum(classes, k)
    else:
        boundaries = tuple(empirical_quantile(r, j / k) for j in range(1, k))
        if any(b2 <= b1 for b1, b2 in zip(boundaries, boundaries[1:])):
            raise DegenerateClusterError(
                f"tied equal-count boundaries {boundaries}; too few distinct residuals for k={k}"
            )
        # Boundary values close their lower class, balancing distinct samples.
        classes = np.searchsorted(boundaries, r, side="left") + 1

    return ClusterAssignment(
        tau_u=tau_u,
        k=k,
        scheme=scheme,
        boundaries=boundaries,
        region_ids=tuple(region_ids),
        residuals=r,
        classes=classes,
        source=dict(source or {}),
    )


def cluster_report(assignment: ClusterAssignment, ds: Dataset | None = None) -> dict:
    """Summarize an assignment: class sizes, residual spread, country mix.

    When a dataset is supplied its regions must match the assignment exactly;
    the summary then includes the per-country class composition.
    """
    per_class = []
    for c in range(1, assignment.k + 1):
        mask = assignment.classes == c
        entry = {"class": c, "count": int(mask.sum())}
        if mask.any():
            vals = assignment.residuals[mask]
            entry.update(
                residual_mean=float(vals.mean()),
                residual_min=float(vals.min()),
                residual_max=float(vals.max()),
            )
        else:
            entry.update(residual_mean=None, residual_min=None, residual_max=None)
        per_class.append(entry)

    report = {
        "tau_u": assignment.tau_u,
        "k": assignment.k,
        "scheme": assignment.scheme,
        "boundaries": list(assignment.boundaries),
        "source": dict(assignment.source),
        "classes": per_class,
    }

    if ds is not None:
        if tuple(ds.region_ids) != assignment.region_ids:
            raise DataValidationError(
                "assignment and dataset regions do not match (count or order differs)"
            )
        composition: dict[str, list[int]] = {}
        for country, cls in zip(ds.countries, assignment.classes):
            composition.setdefault(country, [0] * assignment.k)[cls - 1] += 1
        report["country_composition"] = {
            country: counts for country, counts in sorted(composition.items())
        }
    return report


def write_assignment_csv(assignment: ClusterAssignment, path) -> None:
    """Write one row per region: identifier, class, residual (6 significant digits)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("region_id,class,residual\n")
        for rid, cls, res in zip(assignment.region_ids, assignment.classes, assignment.residuals):
            fh.write(f"{rid},{int(cls)},{format(res, '.6g')}\n")

"""Regional growth data: CSV ingestion and construction of the MRW design matrix.

The design regresses the per-worker GDP growth rate on the log initial GDP
level and the Mankiw-Romer-Weil steady-state covariates (effective
depreciation, saving rate, human capital).
"""

import csv
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_consistent_length
from .errors import ConfigError, DataValidationError, DomainError, SchemaError

REQUIRED_COLUMNS = (
    "region_id",
    "country",
    "coord_x",
    "coord_y",
    "gdp_pw_initial",
    "gdp_pw_final",
    "pop_growth",
    "saving_rate",
    "human_capital",
)

#: Design-matrix column names, intercept first. The second column carries the
#: convergence coefficient (negative under catch-up growth).
DESIGN_COLUMNS = (
    "intercept",
    "log_initial_gdp",
    "log_effective_depreciation",
    "log_saving_rate",
    "log_human_capital",
)

_NUMERIC_FIELDS = REQUIRED_COLUMNS[2:]


@dataclass(frozen=True)
class RegionRecord:
    """One region's raw observation for a single growth period."""

    region_id: str
    country: str
    coord_x: float
    coord_y: float
    gdp_pw_initial: float
    gdp_pw_final: float
    pop_growth: float
    saving_rate: float
    human_capital: float

    def invariant_violations(self) -> list[str]:
        """Messages for every violated field constraint (empty when valid)."""
        problems = []
        for name in _NUMERIC_FIELDS:
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{self.region_id}: {name} is not finite")
        if problems:
            return problems
        if not self.gdp_pw_initial > 0:
            problems.append(f"{self.region_id}: gdp_pw_initial must be > 0, got {self.gdp_pw_initial}")
        if not self.gdp_pw_final > 0:
            problems.append(f"{self.region_id}: gdp_pw_final must be > 0, got {self.gdp_pw_final}")
        if not 0 < self.saving_rate <= 1:
            problems.append(f"{self.region_id}: saving_rate must lie in (0, 1], got {self.saving_rate}")
        if not self.human_capital > 0:
            problems.append(f"{self.region_id}: human_capital must be > 0, got {self.human_capital}")
        return problems


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of :class:`RegionRecord`, one per region."""

    records: tuple[RegionRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        problems = [m for r in self.records for m in r.invariant_violations()]
        if problems:
            raise DataValidationError(
                "invalid region records: " + "; ".join(problems)
            )

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(r.region_id for r in self.records)

    @property
    def countries(self) -> tuple[str, ...]:
        return tuple(r.country for r in self.records)

    @property
    def coords(self) -> np.ndarray:
        """Planar coordinates, shape (n, 2)."""
        out = np.array([(r.coord_x, r.coord_y) for r in self.records], dtype=float)
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class ModelConfig:
    """Period length and the technology-plus-depreciation constant.

    ``growth_annualized`` divides the log GDP difference by the period length;
    ``log_human_capital`` controls whether human capital enters in logs
    (the default) or in levels.
    """

    period_years: int = 28
    tech_plus_depreciation: float = 0.05
    growth_annualized: bool = True
    log_human_capital: bool = True

    def __post_init__(self):
        if int(self.period_years) != self.period_years or self.period_years < 1:
            raise ConfigError(f"period_years must be a positive integer, got {self.period_years}")
        if not self.tech_plus_depreciation > 0:
            raise ConfigError(
                f"tech_plus_depreciation must be > 0, got {self.tech_plus_depreciation}"
            )


@dataclass(frozen=True)
class DesignMatrix:
    """Outcome vector and covariate matrix for the growth regression."""

    outcome: np.ndarray
    matrix: np.ndarray
    columns: tuple[str, ...]
    region_ids: tuple[str, ...]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        outcome = np.asarray(self.outcome, dtype=float)
        matrix = np.asarray(self.matrix, dtype=float)
        check_consistent_length(outcome, matrix, self.region_ids)
        if matrix.shape[1] != len(self.columns):
            raise ConfigError(
                f"column names ({len(self.columns)}) do not match matrix width ({matrix.shape[1]})"
            )
        if not (np.all(np.isfinite(outcome)) and np.all(np.isfinite(matrix))):
            raise DataValidationError("design matrix contains non-finite entries")
        outcome.setflags(write=False)
        matrix.setflags(write=False)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "region_ids", tuple(self.region_ids))

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]


def load_dataset(path) -> Dataset:
    """Read regional observations from a headered UTF-8 CSV file.

    The header must contain every column in :data:`REQUIRED_COLUMNS`; extra
    columns are ignored. Row order is preserved. All row-level problems are
    collected before raising, so one error message names every offender.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
        records = []
        row_errors = []
        for i, row in enumerate(reader):
            values = {}
            for name in _NUMERIC_FIELDS:
                raw = row[name]
                try:
                    values[name] = float(raw)
                except (TypeError, ValueError):
                    row_errors.append(f"row {i}: cannot parse {name}={raw!r} as a number")
            if len(values) == len(_NUMERIC_FIELDS):
                records.append(
                    RegionRecord(
                        region_id=row["region_id"],
                        country=row["country"],
                        **values,
                    )
                )
        if row_errors:
            raise DataValidationError(f"{path}: " + "; ".join(row_errors))
    return Dataset(tuple(records))


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write a dataset in the same CSV schema :func:`load_dataset` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS)
        for r in ds.records:
            writer.writerow(
                [
                    r.region_id,
                    r.country,
                    repr(r.coord_x),
                    repr(r.coord_y),
                    repr(r.gdp_pw_initial),
                    repr(r.gdp_pw_final),
                    repr(r.pop_growth),
                    repr(r.saving_rate),
                    repr(r.human_capital),
                ]
            )


def build_design(ds: Dataset, cfg: ModelConfig | None = None) -> DesignMatrix:
    """Construct the MRW growth design from raw regional records.

    The outcome is the log difference of per-worker GDP over the period,
    divided by the period length when ``cfg.growth_annualized`` is set.
    Covariates: log initial GDP, log of (population growth + technology +
    depreciation), log saving rate, and human capital (logged by default).
    """
    cfg = cfg or ModelConfig()
    n = ds.n
    outcome = np.empty(n)
    matrix = np.empty((n, 5))
    matrix[:, 0] = 1.0
    for i, r in enumerate(ds.records):
        log_diff = math.log(r.gdp_pw_final) - math.log(r.gdp_pw_initial)
        outcome[i] = log_diff / cfg.period_years if cfg.growth_annualized else log_diff
        matrix[i, 1] = math.log(r.gdp_pw_initial)
        depreciation = r.pop_growth + cfg.tech_plus_depreciation
        if depreciation <= 0:
            raise DomainError(
                f"{r.region_id}: pop_growth + tech_plus_depreciation = {depreciation} "
                "is not a valid logarithm argument (variable: effective depreciation)"
            )
        matrix[i, 2] = math.log(depreciation)
        matrix[i, 3] = math.log(r.saving_rate)
        matrix[i, 4] = math.log(r.human_capital) if cfg.log_human_capital else r.human_capital
    columns = list(DESIGN_COLUMNS)
    if not cfg.log_human_capital:
        columns[4] = "human_capital"
    return DesignMatrix(
        outcome=outcome,
        matrix=matrix,
        columns=tuple(columns),
        region_ids=ds.region_ids,
        meta={
            "growth_annualized": cfg.growth_annualized,
            "human_capital_in_logs": cfg.log_human_capital,
            "period_years": cfg.period_years,
            "tech_plus_depreciation": cfg.tech_plus_depreciation,
        },
    )


def dataset_from_rows(rows: Iterable[Mapping[str, object]]) -> Dataset:
    """Build a dataset from dict-like rows keyed by the CSV column names."""
    records = []
    for row in rows:
        records.append(
            RegionRecord(
                region_id=str(row["region_id"]),
                country=str(row["country"]),
                **{name: float(row[name]) for name in _NUMERIC_FIELDS},
            )
        )
    return Dataset(tuple(records))

"""Multivariate series container, CSV ingestion, lag matrices, splits, metrics.

A series is a T x V matrix of float64 values on a strictly regular time grid.
Timestamps are stored as integer nanoseconds since the epoch; the sampling
interval (delta) is inferred from the first gap and enforced over the whole
series to a relative tolerance of 1e-9.  Numeric timestamp columns in CSV
files are interpreted as seconds (an integer index column therefore yields a
one-second cadence); ISO-8601 strings are also accepted.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError

NS_PER_SECOND = 10**9
GAP_RTOL = 1e-9
MAPE_FLOOR = 1e-9


def _parse_timestamp(token: str) -> int:
    """Parse one timestamp cell to integer nanoseconds since the epoch.

    Plain numerics are seconds; the fractional part is handled as decimal
    text so second-scale inputs survive the round trip exactly.  Everything
    else goes through ISO-8601.
    """
    token = token.strip()
    if not token:
        raise DataError("empty timestamp cell")
    try:
        sign = -1 if token.startswith("-") else 1
        body = token.lstrip("+-")
        if "." in body:
            whole, frac = body.split(".", 1)
            frac = (frac + "000000000")[:9]
            if not (whole or frac):
                raise ValueError(token)
            return sign * (int(whole or "0") * NS_PER_SECOND + int(frac))
        return sign * int(body) * NS_PER_SECOND
    except ValueError:
        pass
    try:
        text = token.replace("Z", "+00:00") if token.endswith("Z") else token
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {token!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    seconds = stamp.timestamp()
    return int(round(seconds * NS_PER_SECOND))


def _format_timestamp(ns: int) -> str:
    """Exact decimal-seconds rendering of an integer-nanosecond timestamp."""
    sign = "-" if ns < 0 else ""
    ns = abs(ns)
    whole, frac = divmod(ns, NS_PER_SECOND)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}." + f"{frac:09d}".rstrip("0")


@dataclass(frozen=True)
class MultivariateSeries:
    """Immutable T x V series on a regular grid.

    Attributes:
        names: variable identifiers, length V.
        timestamps: int64 nanoseconds since epoch, strictly increasing.
        values: float64 matrix of shape (T, V), all finite.
        target_index: column of the endogenous target variable.
        actionable_mask: per-variable flag; actionable variables may be
            steered away from their median path by an intervention.
    """

    names: tuple[str, ...]
    timestamps: np.ndarray
    values: np.ndarray
    target_index: int
    actionable_mask: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.actionable_mask, dtype=bool)
        if vals.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        T, V = vals.shape
        if V < 1 or len(names) != V:
            raise DataError("names must match the value columns")
        if len(set(names)) != V:
            raise DataError("duplicate variable names")
        if ts.shape != (T,):
            raise DataError("timestamps must match the value rows")
        if T < 2:
            raise DataError("need at least two samples to fix the sampling interval")
        if mask.shape != (V,):
            raise DataError("actionable_mask must have one flag per variable")
        if not 0 <= self.target_index < V:
            raise DataError(f"target_index {self.target_index} out of range")
        gaps = np.diff(ts)
        if np.any(gaps <= 0):
            raise DataError("non-monotone timestamps")
        delta = int(gaps[0])
        if np.any(np.abs(gaps - delta) > GAP_RTOL * delta):
            raise DataError("non-uniform sampling interval")
        if not np.all(np.isfinite(vals)):
            raise DataError("non-finite values after ingestion")
        ts.setflags(write=False)
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "actionable_mask", mask)
        object.__setattr__(self, "_delta_ns", delta)

    @property
    def delta_ns(self) -> int:
        return self._delta_ns

    @property
    def delta_seconds(self) -> float:
        return self._delta_ns / NS_PER_SECOND

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    @property
    def target_name(self) -> str:
        return self.names[self.target_index]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown variable {name!r}") from None

    def slice_rows(self, start: int, stop: int) -> "MultivariateSeries":
        """Contiguous row slice as a new series (grid regularity is preserved)."""
        return MultivariateSeries(
            names=self.names,
            timestamps=self.timestamps[start:stop].copy(),
            values=self.values[start:stop].copy(),
            target_index=self.target_index,
            actionable_mask=self.actionable_mask.copy(),
        )

    def tail_window(self, k: int) -> np.ndarray:
        """Last k rows, oldest first; shape (k, V)."""
        if not 1 <= k <= self.n_samples:
            raise DataError(f"window of {k} rows not available (T={self.n_samples})")
        return self.values[-k:]


@dataclass(frozen=True)
class IngestConfig:
    """CSV ingestion options.

    fill:
        "reject"  - drop rows containing missing cells (the default; a hole
                    in the middle of the grid then fails the uniform-delta
                    invariant loudly rather than being papered over).
        "forward" - forward-fill missing cells from the previous row.
    actionable: variable names an operator can steer; default all but target.
    """

    target: str
    fill: str = "reject"
    actionable: tuple[str, ...] | None = None


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_dropped: int
    cells_filled: int


def load_csv(path, config: IngestConfig) -> tuple[MultivariateSeries, IngestReport]:
    """Load a series from a CSV file with a header row.

    First column is the timestamp (ISO-8601 or decimal seconds), remaining
    columns are numeric variables.  Missing cells are handled per
    ``config.fill``; the report carries the dropped/filled counts.
    """
    if config.fill not in ("reject", "forward"):
        raise DataError(f"unknown fill policy {config.fill!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty CSV") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if len(header) < 2:
        raise DataError("malformed header: need a timestamp column plus at least one variable")
    names = tuple(h.strip() for h in header[1:])
    if any(not n for n in names) or len(set(names)) != len(names):
        raise DataError("malformed header: blank or duplicate column names")
    if config.target not in names:
        raise DataError(f"unknown target name {config.target!r}")

    rows_read = len(rows)
    V = len(names)
    stamps: list[int] = []
    raw: list[list[float]] = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != V + 1:
            raise DataError(f"row {lineno}: expected {V + 1} cells, got {len(row)}")
        stamps.append(_parse_timestamp(row[0]))
        parsed = []
        for cell in row[1:]:
            cell = cell.strip()
            if not cell:
                parsed.append(math.nan)
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(f"row {lineno}: non-numeric cell {cell!r}") from None
        raw.append(parsed)

    if not raw:
        raise DataError("CSV contains no data rows")
    matrix = np.array(raw, dtype=np.float64)
    ts = np.array(stamps, dtype=np.int64)
    for j, name in enumerate(names):
        if np.all(np.isnan(matrix[:, j])):
            raise DataError(f"all-empty column {name!r}")

    rows_dropped = 0
    cells_filled = 0
    holes = np.isnan(matrix)
    if config.fill == "reject":
        bad = holes.any(axis=1)
        rows_dropped = int(bad.sum())
        matrix = matrix[~bad]
        ts = ts[~bad]
    else:
        if holes[0].any():
            raise DataError("missing cell in first row: nothing to forward-fill from")
        for i in range(1, matrix.shape[0]):
            for j in np.nonzero(holes[i])[0]:
                matrix[i, j] = matrix[i - 1, j]
                cells_filled += 1

    mask = _resolve_mask(names, config.target, config.actionable)
    series = MultivariateSeries(
        names=names,
        timestamps=ts,
        values=matrix,
        target_index=names.index(config.target),
        actionable_mask=mask,
    )
    return series, IngestReport(rows_read, rows_dropped, cells_filled)


def _resolve_mask(names, target, actionable):
    if actionable is None:
        return np.array([n != target for n in names], dtype=bool)
    unknown = [a for a in actionable if a not in names]
    if unknown:
        raise DataError(f"actionable names not in series: {unknown}")
    return np.array([n in actionable for n in names], dtype=bool)


def save_series(series: MultivariateSeries, directory) -> Path:
    """Persist a series bundle: ``series.csv`` plus ``meta.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "series.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *series.names])
        for i in range(series.n_samples):
            cells = [f"{v:.17g}" for v in series.values[i]]
            writer.writerow([_format_timestamp(int(series.timestamps[i])), *cells])
    meta = {
        "names": list(series.names),
        "delta_seconds": series.delta_ns / NS_PER_SECOND,
        "target": series.target_name,
        "actionable_mask": [bool(b) for b in series.actionable_mask],
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_series(directory) -> MultivariateSeries:
    """Load a series bundle written by :func:`save_series`."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    csv_path = directory / "series.csv"
    if not meta_path.exists() or not csv_path.exists():
        raise DataError(f"not a series bundle: {directory}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    actionable = tuple(
        n for n, flag in zip(meta["names"], meta["actionable_mask"]) if flag
    )
    series, _ = load_csv(csv_path, IngestConfig(target=meta["target"], actionable=actionable))
    if list(series.names) != list(meta["names"]):
        raise DataError("meta.json names disagree with series.csv header")
    return series


@dataclass(frozen=True)
class LagDesign:
    """Design matrix of lagged predictors for one response variable.

    Row i targets time p + i; column (v, j) holds series[p + i - j][v].
    """

    rows: np.ndarray
    targets: np.ndarray
    lag_order: int
    feature_columns: tuple[tuple[str, int], ...]
    response: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if rows.ndim != 2 or targets.ndim != 1 or rows.shape[0] != targets.shape[0]:
            raise DataError("rows and targets are inconsistent")
        if rows.shape[1] != len(self.feature_columns):
            raise DataError("feature_columns must describe every column")
        rows.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


def make_lag_design(
    series: MultivariateSeries,
    response: str,
    included: list[str] | tuple[str, ...],
    p: int,
) -> LagDesign:
    """Build the lag-p design for ``response`` from the ``included`` variables.

    Column layout is deterministic: included variables in the given order,
    lags 1..p within each.
    """
    if p < 1:
        raise DataError(f"lag order must be >= 1, got {p}")
    if series.n_samples <= p:
        raise DataError(f"lag order {p} needs more than {p} samples, have {series.n_samples}")
    included = list(included)
    if not included:
        raise DataError("included variable set is empty")
    resp_col = series.index_of(response)
    cols = [series.index_of(v) for v in included]

    T = series.n_samples
    M = T - p
    K = p * len(included)
    rows = np.empty((M, K), dtype=np.float64)
    columns: list[tuple[str, int]] = []
    k = 0
    for name, c in zip(included, cols):
        for j in range(1, p + 1):
            rows[:, k] = series.values[p - j : T - j, c]
            columns.append((name, j))
            k += 1
    targets = series.values[p:, resp_col].copy()
    return LagDesign(
        rows=rows,
        targets=targets,
        lag_order=p,
        feature_columns=tuple(columns),
        response=response,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Chronological train/validation folds; ranges are half-open row indices."""

    folds: tuple[tuple[tuple[int, int], tuple[int, int]], ...]

    def __post_init__(self):
        prev_end = None
        for (tr_start, tr_end), (va_start, va_end) in self.folds:
            if not (0 <= tr_start < tr_end <= va_start < va_end):
                raise DataError("fold must validate strictly after it trains")
            if prev_end is not None and va_start < prev_end:
                raise DataError("validation ranges overlap")
            prev_end = va_end

    @property
    def n_folds(self) -> int:
        return len(self.folds)


def walk_forward_splits(series: MultivariateSeries, n_folds: int, min_train: int) -> SplitPlan:
    """Split the series into walk-forward folds.

    The last T - min_train rows are divided into n_folds contiguous
    validation blocks (equal up to remainder, earlier blocks take the extra
    row); fold k trains on every row before its block.
    """
    T = series.n_samples
    if n_folds < 2:
        raise DataError(f"need at least 2 folds, got {n_folds}")
    if min_train < 1:
        raise DataError("min_train must be positive")
    if min_train + n_folds > T:
        raise DataError(
            f"insufficient data: min_train={min_train} plus {n_folds} folds exceeds T={T}"
        )
    span = T - min_train
    base, extra = divmod(span, n_folds)
    folds = []
    start = min_train
    for k in range(n_folds):
        size = base + (1 if k < extra else 0)
        folds.append(((0, start), (start, start + size)))
        start += size
    return SplitPlan(folds=tuple(folds))


@dataclass(frozen=True)
class MetricsReport:
    """Forecast-quality metrics for one prediction/actual pair."""

    mae: float
    mse: float
    r2: float
    mape: float
    n: int
    r2_defined: bool = True
    mape_excluded: int = 0
    wall_time_fit: float = 0.0
    wall_time_predict: float = 0.0


def compute_metrics(pred, actual, wall_time_fit: float = 0.0, wall_time_predict: float = 0.0) -> MetricsReport:
    """MAE, MSE, R2 and guarded MAPE for two equal-length vectors.

    R2 is undefined for a constant actual vector and reported as NaN with
    ``r2_defined`` false; MAPE excludes samples with |actual| < 1e-9 and
    counts them.
    """
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape or pred.ndim != 1:
        raise DataError("pred and actual must be equal-length vectors")
    n = pred.shape[0]
    if n < 2:
        raise DataError("need at least 2 samples for metrics")
    err = pred - actual
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        r2, r2_defined = math.nan, False
    else:
        r2, r2_defined = 1.0 - ss_res / ss_tot, True
    usable = np.abs(actual) >= MAPE_FLOOR
    excluded = int(n - usable.sum())
    if usable.any():
        mape = float(np.mean(np.abs(err[usable] / actual[usable])))
    else:
        mape = math.nan
    return MetricsReport(
        mae=mae,
        mse=mse,
        r2=r2,
        mape=mape,
        n=n,
        r2_defined=r2_defined,
        mape_excluded=excluded,
        wall_time_fit=wall_time_fit,
        wall_time_predict=wall_time_predict,
    )


class Stopwatch:
    """Tiny wall-clock helper for fit/predict timing in evaluation tables."""

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._start
        return False

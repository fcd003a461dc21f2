"""Granger causality by restricted-vs-unrestricted forecast comparison.

For a candidate edge cause -> effect, two autoregressive models are fitted
per walk-forward fold: a restricted one without the cause's lags and an
unrestricted one with them.  Per-fold validation MAEs feed a one-sided
paired t-test (alternative: the unrestricted model predicts better); the
null is that the cause carries no incremental information.

``granger_pair`` accepts extra conditioning variables whose lags enter both
models.  The full-matrix scan conditions each pair test on all remaining
variables by default, which separates direct edges from transitive
information channels (a chain a -> b -> c makes the pairwise a -> c test
fire persistently even though no direct edge exists).

Stationarity is assumed, not checked: on integrated series these tests can
be spurious, and callers are expected to difference such data first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .errors import DataError, ModelError
from .learners import fit_ridge
from .series import LagDesign, MultivariateSeries, SplitPlan, make_lag_design

ALPHA = 0.05


def student_t_sf(t: float, df: int) -> float:
    """Upper-tail probability P(T >= t) of Student-t with df degrees of freedom.

    Evaluated through the regularized incomplete beta function:
    for t >= 0, P = I_{df/(df+t^2)}(df/2, 1/2) / 2.
    """
    if df < 1:
        raise DataError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(differences) -> tuple[float, float]:
    """One-sided paired t-test for mean(differences) > 0.

    Returns (t_stat, p_value) with sd using the n-1 denominator.  Zero
    variance degenerates by sign of the mean: positive -> p = 0, negative
    -> p = 1, zero -> p = 0.5.
    """
    d = np.asarray(differences, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise DataError("paired t-test needs at least 2 differences")
    n = d.shape[0]
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean > 0:
            return math.inf, 0.0
        if mean < 0:
            return -math.inf, 1.0
        return 0.0, 0.5
    t = mean / (sd / math.sqrt(n))
    return t, student_t_sf(t, n - 1)


@dataclass(frozen=True)
class GrangerResult:
    """Outcome of one directed cause -> effect test."""

    cause: str
    effect: str
    fold_errors_restricted: np.ndarray
    fold_errors_unrestricted: np.ndarray
    t_stat: float
    p_value: float
    significant: bool
    folds_skipped: int = 0

    def __post_init__(self):
        er = np.asarray(self.fold_errors_restricted, dtype=np.float64)
        eu = np.asarray(self.fold_errors_unrestricted, dtype=np.float64)
        if er.shape != eu.shape or er.ndim != 1 or er.shape[0] < 2:
            raise DataError("fold error vectors must be equal length >= 2")
        if not 0.0 <= self.p_value <= 1.0:
            raise DataError("p_value out of [0, 1]")
        if self.significant != (self.p_value < ALPHA):
            raise DataError("significant flag disagrees with p_value")
        er.setflags(write=False)
        eu.setflags(write=False)
        object.__setattr__(self, "fold_errors_restricted", er)
        object.__setattr__(self, "fold_errors_unrestricted", eu)


def _design_slice(design: LagDesign, rows: slice) -> LagDesign:
    return LagDesign(
        rows=design.rows[rows],
        targets=design.targets[rows],
        lag_order=design.lag_order,
        feature_columns=design.feature_columns,
        response=design.response,
    )


def _fold_mae(model, design: LagDesign, rows: slice) -> float:
    pred = model.predict(design.rows[rows])
    return float(np.mean(np.abs(pred - design.targets[rows])))


def granger_pair(
    series: MultivariateSeries,
    cause: str,
    effect: str,
    p: int,
    plan: SplitPlan,
    conditioning: tuple[str, ...] = (),
    ridge_lambda: float = 0.0,
) -> GrangerResult:
    """Test whether ``cause`` Granger-causes ``effect`` at lag order p.

    Both models include the effect's own lags and the lags of any
    ``conditioning`` variables; the unrestricted model adds the cause's
    lags.  Folds whose fit is singular are skipped and counted; fewer than
    two surviving folds is an error.
    """
    if cause == effect:
        raise DataError("cause and effect must differ")
    if plan.n_folds < 2:
        raise DataError("need at least 2 folds")
    base = [effect] + [v for v in conditioning if v not in (cause, effect)]
    design_r = make_lag_design(series, effect, base, p)
    design_u = make_lag_design(series, effect, base + [cause], p)

    errs_r: list[float] = []
    errs_u: list[float] = []
    skipped = 0
    for (_, train_end), (va_start, va_end) in plan.folds:
        train = slice(0, max(train_end - p, 0))
        val = slice(max(va_start - p, 0), va_end - p)
        try:
            model_r = fit_ridge(_design_slice(design_r, train), ridge_lambda)
            model_u = fit_ridge(_design_slice(design_u, train), ridge_lambda)
        except ModelError:
            skipped += 1
            continue
        errs_r.append(_fold_mae(model_r, design_r, val))
        errs_u.append(_fold_mae(model_u, design_u, val))
    if len(errs_r) < 2:
        raise ModelError(
            f"granger test {cause}->{effect}: only {len(errs_r)} folds survived fitting"
        )
    diffs = np.array(errs_r) - np.array(errs_u)
    t_stat, p_value = paired_t_test(diffs)
    return GrangerResult(
        cause=cause,
        effect=effect,
        fold_errors_restricted=np.array(errs_r),
        fold_errors_unrestricted=np.array(errs_u),
        t_stat=t_stat,
        p_value=p_value,
        significant=p_value < ALPHA,
        folds_skipped=skipped,
    )


@dataclass(frozen=True)
class CausalityMatrix:
    """V x V p-values and significance mask; row = cause, column = effect.

    Diagonal entries are undefined (NaN / False).
    """

    names: tuple[str, ...]
    p_values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        V = len(self.names)
        pv = np.asarray(self.p_values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if pv.shape != (V, V) or mask.shape != (V, V):
            raise DataError("matrix shapes must be V x V")
        off = ~np.eye(V, dtype=bool)
        if not np.all(np.isnan(pv[~off])):
            raise DataError("diagonal p-values must be undefined (NaN)")
        if np.any(mask[~off]):
            raise DataError("diagonal mask must be false")
        finite = np.isfinite(pv[off])
        if not np.all(finite):
            raise DataError("off-diagonal p-values must be defined")
        if not np.array_equal(mask[off], pv[off] < ALPHA):
            raise DataError("mask must equal p_values < alpha off-diagonal")
        pv.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "p_values", pv)
        object.__setattr__(self, "mask", mask)

    def entry(self, cause: str, effect: str) -> float:
        i = self.names.index(cause)
        j = self.names.index(effect)
        return float(self.p_values[i, j])


def causality_matrix(
    series: MultivariateSeries,
    p: int,
    plan: SplitPlan,
    condition_on_rest: bool = True,
    ridge_lambda: float = 0.0,
) -> CausalityMatrix:
    """Run every ordered-pair test and assemble the matrix.

    With ``condition_on_rest`` (the default) each pair test conditions on
    the remaining variables' lags, so the mask estimates direct structure
    rather than the transitive closure.
    """
    names = series.names
    V = len(names)
    if V < 2:
        raise DataError("need at least 2 variables")
    pv = np.full((V, V), math.nan)
    for i, cause in enumerate(names):
        for j, effect in enumerate(names):
            if i == j:
                continue
            conditioning = (
                tuple(n for n in names if n not in (cause, effect))
                if condition_on_rest
                else ()
            )
            result = granger_pair(
                series, cause, effect, p, plan,
                conditioning=conditioning, ridge_lambda=ridge_lambda,
            )
            pv[i, j] = result.p_value
    mask = pv < ALPHA
    np.fill_diagonal(mask, False)
    return CausalityMatrix(names=names, p_values=pv, mask=mask)


def select_features(matrix: CausalityMatrix, effect: str) -> list[str]:
    """The effect itself plus its significant causes, in matrix order."""
    if effect not in matrix.names:
        raise DataError(f"unknown variable {effect!r}")
    j = matrix.names.index(effect)
    causes = [name for i, name in enumerate(matrix.names) if i != j and matrix.mask[i, j]]
    return [effect] + causes


def export_heatmap(matrix: CausalityMatrix, path) -> tuple[Path, Path]:
    """Write p-values and the significance mask as plot-ready CSVs.

    The p-value CSV lands at ``path``; the mask goes next to it with a
    ``_mask`` stem suffix.  Undefined diagonal cells serialize empty.
    """
    path = Path(path)
    mask_path = path.with_name(path.stem + "_mask" + (path.suffix or ".csv"))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *matrix.names])
        for i, cause in enumerate(matrix.names):
            cells = [
                "" if i == j else f"{matrix.p_values[i, j]:.17g}"
                for j in range(len(matrix.names))
            ]
            writer.writerow([cause, *cells])
    with mask_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *matrix.names])
        for i, cause in enumerate(matrix.names):
            cells = [
                "" if i == j else ("1" if matrix.mask[i, j] else "0")
                for j in range(len(matrix.names))
            ]
            writer.writerow([cause, *cells])
    return path, mask_path


def load_heatmap(path) -> CausalityMatrix:
    """Re-read an exported heatmap CSV (the mask is recomputed from alpha)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    V = len(names)
    pv = np.full((V, V), math.nan)
    for i, row in enumerate(rows[1:]):
        if row[0] != names[i]:
            raise DataError("heatmap row names disagree with header")
        for j, cell in enumerate(row[1:]):
            if cell:
                pv[i, j] = float(cell)
    mask = pv < ALPHA
    np.fill_diagonal(mask, False)
    return CausalityMatrix(names=names, p_values=pv, mask=mask)

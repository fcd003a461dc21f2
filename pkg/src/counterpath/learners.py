"""Linear point forecasters and pinball-loss quantile regressors.

The point learner is closed-form ridge on a lag design.  Quantile learners
minimize the pinball loss

    L(tau, x, x_pred) = max(tau * (x - x_pred), (tau - 1) * (x - x_pred))

by full-batch subgradient descent from zero initialization with an
lr/sqrt(epoch) step decay, on z-normalized features and target; fitted
parameters are mapped back to raw units for storage.  A bank holds one
fitted quantile model per level of a fixed alphabet and returns predictions
sorted ascending, which repairs any quantile crossing between the
independently trained levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ModelError
from .series import LagDesign, MultivariateSeries, make_lag_design

DEFAULT_LEVELS = (0.05, 0.15, 0.25, 0.35, 0.45, 0.50, 0.55, 0.65, 0.75, 0.85, 0.95)
# 2000 epochs at lr 0.2 calibrates extreme quantiles on desk-scale designs
# (500 @ 0.05 leaves the subgradient walk visibly short of the optimum).
DEFAULT_EPOCHS = 2000
DEFAULT_LR = 0.2
_SD_FLOOR = 1e-12


def pinball_loss(tau: float, actual: float, pred: float) -> float:
    """Asymmetric quantile loss; nonnegative, zero iff actual == pred.

    Penalizes underestimation with weight tau and overestimation with
    weight 1 - tau, so high tau punishes predictions below the actual.
    """
    if not 0.0 < tau < 1.0:
        raise DataError(f"tau must lie in (0, 1), got {tau}")
    err = actual - pred
    return max(tau * err, (tau - 1.0) * err)


def _pinball_mean(tau: float, err: np.ndarray) -> float:
    return float(np.mean(np.maximum(tau * err, (tau - 1.0) * err)))


@dataclass(frozen=True)
class LinearModel:
    """y_hat = rows @ weights + intercept over a fixed lag-column layout."""

    weights: np.ndarray
    intercept: float
    feature_columns: tuple[tuple[str, int], ...]
    ridge_lambda: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != len(self.feature_columns):
            raise ModelError("weights must align with feature_columns")
        if not np.all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ModelError("non-finite model parameters")
        if self.ridge_lambda < 0:
            raise ModelError("ridge_lambda must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))

    def predict(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        return rows @ self.weights + self.intercept


def fit_ridge(design: LagDesign, ridge_lambda: float = 0.0) -> LinearModel:
    """Closed-form ridge with intercept via column centering.

    Solves (Xc' Xc + lambda I) w = Xc' yc on centered data.  The Gram matrix
    is factorized by Cholesky, so a rank-deficient system at lambda = 0 is
    reported rather than silently mis-solved; callers may retry with a
    positive lambda.
    """
    if ridge_lambda < 0:
        raise ModelError("ridge_lambda must be nonnegative")
    X, y = design.rows, design.targets
    M, K = X.shape
    if M <= K:
        raise ModelError(f"need more rows than features, got M={M}, K={K}")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + ridge_lambda * np.eye(K)
    singular = False
    try:
        chol = np.linalg.cholesky(gram)
        if K:
            pivots = np.diag(chol)
            # roundoff can sneak a semi-definite Gram past cholesky
            singular = not np.all(np.isfinite(pivots)) or (
                float(pivots.min()) < 1e-7 * float(pivots.max())
            )
    except np.linalg.LinAlgError:
        singular = True
    if singular:
        raise ModelError(
            "singular normal equations at lambda="
            f"{ridge_lambda:g}; raise the ridge penalty"
        )
    rhs = Xc.T @ yc
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    intercept = y_mean - float(x_mean @ w)
    return LinearModel(
        weights=w,
        intercept=intercept,
        feature_columns=design.feature_columns,
        ridge_lambda=ridge_lambda,
    )


@dataclass(frozen=True)
class QuantileModel:
    """One fitted quantile regressor: level, linear core, optimizer record."""

    tau: float
    base: LinearModel
    training_epochs: int
    learning_rate: float
    final_loss: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DataError(f"tau must lie in (0, 1), got {self.tau}")

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return self.base.predict(rows)


def fit_quantile(
    design: LagDesign,
    tau: float,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
) -> QuantileModel:
    """Fit one quantile regressor by subgradient descent on the pinball loss.

    Optimization runs in z-normalized feature/target space from zero
    initialization with step lr / sqrt(epoch); the best parameters seen are
    kept, so the final training loss never exceeds the initial one.
    """
    if not 0.0 < tau < 1.0:
        raise DataError(f"tau must lie in (0, 1), got {tau}")
    if design.n_rows < 20:
        raise ModelError(f"need at least 20 rows to fit a quantile model, got {design.n_rows}")
    if epochs < 1 or lr <= 0:
        raise ModelError("epochs must be >= 1 and lr positive")

    X, y = design.rows, design.targets
    M, K = X.shape
    x_mean = X.mean(axis=0)
    x_sd = np.maximum(X.std(axis=0), _SD_FLOOR)
    y_mean = float(y.mean())
    y_sd = max(float(y.std()), _SD_FLOOR)
    Z = (X - x_mean) / x_sd
    u = (y - y_mean) / y_sd

    w = np.zeros(K)
    b = 0.0
    best_w, best_b = w.copy(), b
    best_loss = _pinball_mean(tau, u)
    for epoch in range(1, epochs + 1):
        err = u - (Z @ w + b)
        loss = _pinball_mean(tau, err)
        if not np.isfinite(loss):
            raise ModelError(f"divergence at epoch {epoch}: non-finite training loss")
        if loss < best_loss:
            best_loss = loss
            best_w, best_b = w.copy(), b
        grad_pred = np.where(err > 0, -tau, np.where(err < 0, 1.0 - tau, 0.0))
        step = lr / np.sqrt(epoch)
        w = w - step * (Z.T @ grad_pred) / M
        b = b - step * float(grad_pred.mean())

    raw_w = y_sd * best_w / x_sd
    raw_b = y_mean + y_sd * (best_b - float((best_w / x_sd) @ x_mean))
    base = LinearModel(weights=raw_w, intercept=raw_b, feature_columns=design.feature_columns)
    return QuantileModel(
        tau=tau,
        base=base,
        training_epochs=epochs,
        learning_rate=lr,
        final_loss=best_loss,
    )


@dataclass(frozen=True)
class QuantileBank:
    """Per-variable family of quantile models over an ascending alphabet.

    All models share one lag design: the variable's own lags plus the lags
    of its selected causal drivers.  The median level 0.5 must be present;
    it is the pinned path for non-actionable variables.
    """

    variable: str
    levels: tuple[float, ...]
    models: tuple[QuantileModel, ...]

    def __post_init__(self):
        levels = tuple(float(t) for t in self.levels)
        if len(levels) != len(self.models):
            raise DataError("one model per level required")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise DataError("levels must be strictly ascending")
        if median_index(levels) is None:
            raise DataError("alphabet must contain the 0.5 level")
        for level, model in zip(levels, self.models):
            if abs(model.tau - level) > 1e-12:
                raise DataError("model levels disagree with the alphabet")
            if model.base.feature_columns != self.models[0].base.feature_columns:
                raise DataError("bank models must share one feature layout")
        stacked = np.array([m.base.weights for m in self.models])
        intercepts = np.array([m.base.intercept for m in self.models])
        stacked.setflags(write=False)
        intercepts.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "_weight_matrix", stacked)
        object.__setattr__(self, "_intercepts", intercepts)

    @property
    def feature_columns(self) -> tuple[tuple[str, int], ...]:
        return self.models[0].base.feature_columns

    @property
    def feature_names(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name, _ in self.feature_columns:
            if name not in seen:
                seen.append(name)
        return tuple(seen)

    @property
    def lag_order(self) -> int:
        return max(lag for _, lag in self.feature_columns)


def median_index(levels) -> int | None:
    for i, level in enumerate(levels):
        if abs(level - 0.5) <= 1e-12:
            return i
    return None


def fit_bank(
    series: MultivariateSeries,
    variable: str,
    features,
    levels=DEFAULT_LEVELS,
    p: int = 5,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
) -> QuantileBank:
    """Fit one quantile model per level over a shared lag design."""
    features = list(features)
    if variable not in features:
        raise DataError(f"features must include the response variable {variable!r}")
    design = make_lag_design(series, variable, features, p)
    models = tuple(fit_quantile(design, tau, epochs=epochs, lr=lr) for tau in levels)
    return QuantileBank(variable=variable, levels=tuple(levels), models=models)


def predict_quantiles(bank: QuantileBank, lag_window: dict) -> np.ndarray:
    """One-step-ahead prediction at every level, sorted ascending.

    ``lag_window`` maps each feature variable to its recent values in
    chronological order (oldest first); the last ``p`` entries are used, so
    ``window[v][-j]`` supplies lag j.  Raw per-level outputs are sorted
    before return (monotone rearrangement), so the result never crosses.
    """
    x = assemble_lag_vector(bank.feature_columns, lag_window)
    raw = bank._weight_matrix @ x + bank._intercepts
    return np.sort(raw)


def assemble_lag_vector(feature_columns, lag_window: dict) -> np.ndarray:
    """Build the design-row vector for one prediction from per-variable windows."""
    x = np.empty(len(feature_columns))
    for k, (name, lag) in enumerate(feature_columns):
        try:
            window = lag_window[name]
        except KeyError:
            raise DataError(f"missing lag window for variable {name!r}") from None
        if len(window) < lag:
            raise DataError(f"lag window for {name!r} too short: need {lag} values")
        x[k] = window[-lag]
    return x

"""Trained-model bundle: quantile banks, main forecaster, causality matrix.

Training runs the full pipeline on one series: causality scan, per-variable
feature selection, one quantile bank per variable, and a ridge point
forecaster for the target.  The bundle serializes to a single JSON document
with every float stored as a 17-significant-digit decimal string, so a
save/load round trip reproduces the weights bit-exactly and two training
runs with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .causality import CausalityMatrix, causality_matrix, select_features
from .errors import DataError
from .learners import (
    DEFAULT_EPOCHS,
    DEFAULT_LEVELS,
    DEFAULT_LR,
    LinearModel,
    QuantileBank,
    QuantileModel,
    fit_bank,
    fit_ridge,
)
from .series import MultivariateSeries, make_lag_design, walk_forward_splits

FORMAT_TAG = "counterpath-bundle-v1"
DEFAULT_LAG_ORDER = 5
DEFAULT_FOLDS = 10
DEFAULT_MAIN_RIDGE = 1e-6


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class ModelBundle:
    """Everything the scenario engine needs, detached from raw data."""

    names: tuple[str, ...]
    delta_ns: int
    target_index: int
    actionable_mask: np.ndarray
    lag_order: int
    levels: tuple[float, ...]
    banks: dict[str, QuantileBank]
    main: LinearModel
    norm_mean: np.ndarray
    norm_std: np.ndarray
    causality: CausalityMatrix

    def __post_init__(self):
        mask = np.asarray(self.actionable_mask, dtype=bool)
        mean = np.asarray(self.norm_mean, dtype=np.float64)
        std = np.asarray(self.norm_std, dtype=np.float64)
        V = len(self.names)
        if mask.shape != (V,) or mean.shape != (V,) or std.shape != (V,):
            raise DataError("per-variable arrays must have length V")
        if set(self.banks) != set(self.names):
            raise DataError("need exactly one bank per variable")
        for arr in (mask, mean, std):
            arr.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "actionable_mask", mask)
        object.__setattr__(self, "norm_mean", mean)
        object.__setattr__(self, "norm_std", std)

    @property
    def n_variables(self) -> int:
        return len(self.names)

    @property
    def target_name(self) -> str:
        return self.names[self.target_index]

    @property
    def median_level_index(self) -> int:
        from .learners import median_index

        idx = median_index(self.levels)
        assert idx is not None
        return idx


def train_bundle(
    series: MultivariateSeries,
    p: int = DEFAULT_LAG_ORDER,
    levels=DEFAULT_LEVELS,
    n_folds: int = DEFAULT_FOLDS,
    min_train: int | None = None,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    main_ridge: float = DEFAULT_MAIN_RIDGE,
    condition_on_rest: bool = True,
) -> ModelBundle:
    """Run the full training pipeline on one series.

    min_train defaults to 80% of the series: short validation blocks keep
    the causality t-test calibrated (fold errors stay noise-dominated under
    the null) without hurting power on real edges.
    """
    T = series.n_samples
    if min_train is None:
        min_train = max(p + 2, (4 * T) // 5)
    plan = walk_forward_splits(series, n_folds, min_train)
    matrix = causality_matrix(series, p, plan, condition_on_rest=condition_on_rest)

    banks: dict[str, QuantileBank] = {}
    for name in series.names:
        features = select_features(matrix, name)
        banks[name] = fit_bank(
            series, name, features, levels=levels, p=p, epochs=epochs, lr=lr
        )

    target = series.target_name
    main_design = make_lag_design(series, target, select_features(matrix, target), p)
    main = fit_ridge(main_design, main_ridge)

    return ModelBundle(
        names=series.names,
        delta_ns=series.delta_ns,
        target_index=series.target_index,
        actionable_mask=series.actionable_mask.copy(),
        lag_order=p,
        levels=tuple(levels),
        banks=banks,
        main=main,
        norm_mean=series.values.mean(axis=0),
        norm_std=np.maximum(series.values.std(axis=0), 1e-9),
        causality=matrix,
    )


def _linear_to_doc(model: LinearModel) -> dict:
    return {
        "weights": [_fmt(w) for w in model.weights],
        "intercept": _fmt(model.intercept),
        "ridge_lambda": _fmt(model.ridge_lambda),
        "feature_columns": [[name, lag] for name, lag in model.feature_columns],
    }


def _linear_from_doc(doc: dict) -> LinearModel:
    return LinearModel(
        weights=np.array([float(w) for w in doc["weights"]]),
        intercept=float(doc["intercept"]),
        feature_columns=tuple((name, int(lag)) for name, lag in doc["feature_columns"]),
        ridge_lambda=float(doc["ridge_lambda"]),
    )


def bundle_to_json(bundle: ModelBundle) -> str:
    banks_doc = {}
    for name in bundle.names:
        bank = bundle.banks[name]
        banks_doc[name] = {
            "levels": [_fmt(t) for t in bank.levels],
            "models": [
                {
                    "tau": _fmt(m.tau),
                    "linear": _linear_to_doc(m.base),
                    "training_epochs": m.training_epochs,
                    "learning_rate": _fmt(m.learning_rate),
                    "final_loss": _fmt(m.final_loss),
                }
                for m in bank.models
            ],
        }
    V = len(bundle.names)
    pv = [
        [None if i == j else _fmt(bundle.causality.p_values[i, j]) for j in range(V)]
        for i in range(V)
    ]
    doc = {
        "format": FORMAT_TAG,
        "series": {
            "names": list(bundle.names),
            "delta_ns": bundle.delta_ns,
            "target": bundle.target_name,
            "actionable_mask": [bool(b) for b in bundle.actionable_mask],
        },
        "lag_order": bundle.lag_order,
        "levels": [_fmt(t) for t in bundle.levels],
        "banks": banks_doc,
        "main": _linear_to_doc(bundle.main),
        "normalization": {
            "mean": [_fmt(x) for x in bundle.norm_mean],
            "std": [_fmt(x) for x in bundle.norm_std],
        },
        "causality": {
            "p_values": pv,
            "mask": [[bool(b) for b in row] for row in bundle.causality.mask],
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def bundle_from_json(text: str) -> ModelBundle:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_TAG:
        raise DataError(f"not a model bundle (format tag {doc.get('format')!r})")
    names = tuple(doc["series"]["names"])
    levels = tuple(float(t) for t in doc["levels"])
    banks: dict[str, QuantileBank] = {}
    for name in names:
        bdoc = doc["banks"][name]
        models = tuple(
            QuantileModel(
                tau=float(m["tau"]),
                base=_linear_from_doc(m["linear"]),
                training_epochs=int(m["training_epochs"]),
                learning_rate=float(m["learning_rate"]),
                final_loss=float(m["final_loss"]),
            )
            for m in bdoc["models"]
        )
        banks[name] = QuantileBank(
            variable=name,
            levels=tuple(float(t) for t in bdoc["levels"]),
            models=models,
        )
    V = len(names)
    pv = np.full((V, V), math.nan)
    for i in range(V):
        for j in range(V):
            cell = doc["causality"]["p_values"][i][j]
            if cell is not None:
                pv[i, j] = float(cell)
    mask = np.array(doc["causality"]["mask"], dtype=bool)
    matrix = CausalityMatrix(names=names, p_values=pv, mask=mask)
    return ModelBundle(
        names=names,
        delta_ns=int(doc["series"]["delta_ns"]),
        target_index=names.index(doc["series"]["target"]),
        actionable_mask=np.array(doc["series"]["actionable_mask"], dtype=bool),
        lag_order=int(doc["lag_order"]),
        levels=levels,
        banks=banks,
        main=_linear_from_doc(doc["main"]),
        norm_mean=np.array([float(x) for x in doc["normalization"]["mean"]]),
        norm_std=np.array([float(x) for x in doc["normalization"]["std"]]),
        causality=matrix,
    )


def save_bundle(bundle: ModelBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(bundle_to_json(bundle), encoding="utf-8")
    return path


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such bundle: {path}")
    return bundle_from_json(path.read_text(encoding="utf-8"))

"""Stable VAR(p) generator with planted causal adjacency.

Ground-truth substrate for the test and benchmark suites: Granger recovery
against a known graph, quantile calibration against analytic Gaussian
conditionals, and planted-feasible GA searches.  Innovations are Gaussian;
the companion-matrix spectral radius must be below one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .series import NS_PER_SECOND, MultivariateSeries

DEFAULT_BURN_IN = 200
DEFAULT_DELTA_SECONDS = 3


@dataclass(frozen=True)
class VarSystemSpec:
    """x_t = sum_k A[k] @ x_{t-k} + sigma * eps_t, eps ~ N(0, I).

    ``coefficients`` has shape (p, V, V) with A[k][i][j] the weight of
    cause j at lag k+1 on effect i.
    """

    names: tuple[str, ...]
    coefficients: np.ndarray
    noise_sigma: np.ndarray
    target: str
    actionable: tuple[str, ...]
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        sigma = np.asarray(self.noise_sigma, dtype=np.float64)
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
            raise DataError("coefficients must have shape (p, V, V)")
        V = coeffs.shape[1]
        if len(self.names) != V:
            raise DataError("names must match coefficient dimension")
        if sigma.shape != (V,) or np.any(sigma <= 0):
            raise DataError("noise_sigma must be positive per variable")
        if self.target not in self.names:
            raise DataError(f"target {self.target!r} not in names")
        if any(a not in self.names for a in self.actionable):
            raise DataError("actionable names must be a subset of names")
        if self.burn_in < 0:
            raise DataError("burn_in must be nonnegative")
        radius = companion_spectral_radius(coeffs)
        if radius >= 1.0:
            raise DataError(f"unstable system: companion spectral radius {radius:.4g} >= 1")
        coeffs.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "noise_sigma", sigma)
        object.__setattr__(self, "actionable", tuple(self.actionable))

    @property
    def n_variables(self) -> int:
        return self.coefficients.shape[1]

    @property
    def order(self) -> int:
        return self.coefficients.shape[0]

    def planted_adjacency(self) -> np.ndarray:
        """Boolean (cause, effect) matrix: any nonzero lag coefficient."""
        present = np.any(np.abs(self.coefficients) > 0, axis=0)
        return present.T.copy()

    def to_json(self) -> str:
        doc = {
            "names": list(self.names),
            "coefficients": self.coefficients.tolist(),
            "noise_sigma": self.noise_sigma.tolist(),
            "target": self.target,
            "actionable": list(self.actionable),
            "burn_in": self.burn_in,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VarSystemSpec":
        doc = json.loads(text)
        return cls(
            names=tuple(doc["names"]),
            coefficients=np.array(doc["coefficients"], dtype=np.float64),
            noise_sigma=np.array(doc["noise_sigma"], dtype=np.float64),
            target=doc["target"],
            actionable=tuple(doc["actionable"]),
            burn_in=int(doc.get("burn_in", DEFAULT_BURN_IN)),
        )


def companion_spectral_radius(coefficients: np.ndarray) -> float:
    """Spectral radius of the VAR(p) companion matrix."""
    coeffs = np.asarray(coefficients, dtype=np.float64)
    p, V, _ = coeffs.shape
    companion = np.zeros((p * V, p * V))
    companion[:V] = np.concatenate(list(coeffs), axis=1)
    if p > 1:
        companion[V:, : V * (p - 1)] = np.eye(V * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def generate_var(
    spec: VarSystemSpec,
    T: int,
    seed: int,
    delta_seconds: float = DEFAULT_DELTA_SECONDS,
) -> MultivariateSeries:
    """Simulate T post-burn-in samples of the system, deterministic per seed."""
    if T < 100:
        raise DataError(f"need T >= 100, got {T}")
    rng = np.random.default_rng(seed)
    p, V = spec.order, spec.n_variables
    total = spec.burn_in + T + p
    noise = rng.standard_normal((total, V)) * spec.noise_sigma
    x = np.zeros((total, V))
    x[:p] = noise[:p]
    for t in range(p, total):
        acc = noise[t].copy()
        for k in range(p):
            acc += spec.coefficients[k] @ x[t - 1 - k]
        x[t] = acc
    kept = x[p + spec.burn_in :]
    delta_ns = int(round(delta_seconds * NS_PER_SECOND))
    timestamps = np.arange(T, dtype=np.int64) * delta_ns
    mask = np.array([n in spec.actionable for n in spec.names], dtype=bool)
    return MultivariateSeries(
        names=spec.names,
        timestamps=timestamps,
        values=kept,
        target_index=spec.names.index(spec.target),
        actionable_mask=mask,
    )


def _diag_chain_spec(names, edges, self_coef, edge_coefs, target, actionable):
    V = len(names)
    A = np.zeros((1, V, V))
    np.fill_diagonal(A[0], self_coef)
    for (cause, effect), w in zip(edges, edge_coefs):
        A[0, effect, cause] = w
    return VarSystemSpec(
        names=tuple(names),
        coefficients=A,
        noise_sigma=np.ones(V),
        target=target,
        actionable=tuple(actionable),
    )


def standard_benchmarks() -> dict[str, VarSystemSpec]:
    """Fixed benchmark suite keyed by name.

    granger4: four variables, edges v1->v2 (0.8), v1->v3 (0.6), v3->v4 (0.7),
        self-lags 0.3; the Granger-recovery target.
    ga5: five-variable causal chain v1 -> v2 -> v3 -> v4 -> v5; the GA search
        benchmark with v5 as the (non-actionable) target.
    null2: two independent white-noise channels for false-positive rates.
    """
    granger4 = _diag_chain_spec(
        names=("v1", "v2", "v3", "v4"),
        edges=[(0, 1), (0, 2), (2, 3)],
        self_coef=0.3,
        edge_coefs=[0.8, 0.6, 0.7],
        target="v4",
        actionable=("v1", "v2", "v3"),
    )
    ga5 = _diag_chain_spec(
        names=("v1", "v2", "v3", "v4", "v5"),
        edges=[(0, 1), (1, 2), (2, 3), (3, 4)],
        self_coef=0.5,
        edge_coefs=[0.6, 0.6, 0.6, 0.6],
        target="v5",
        actionable=("v1", "v2", "v3", "v4"),
    )
    null2 = VarSystemSpec(
        names=("n1", "n2"),
        coefficients=np.zeros((1, 2, 2)),
        noise_sigma=np.ones(2),
        target="n2",
        actionable=("n1",),
    )
    return {"granger4": granger4, "ga5": ga5, "null2": null2}

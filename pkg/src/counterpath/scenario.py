"""Recursive scenario projection and the counterfactual objectives.

An intervention policy assigns every variable a quantile level per future
step.  Projection rolls the quantile banks forward step by step: each
variable's next value is the bank prediction at its gene's level, and the
main point forecaster extends the target path over the same grid, feeding
on its own previous outputs plus the variables' projected paths.

A candidate scenario is scored by three objectives:
  o1  distance between the projected terminal target and the goal,
  o2  cosine dissimilarity between the projected paths and the recent
      observed window (both z-normalized with training statistics),
  o3  implausibility, the mean negative log plausibility of the actionable
      genes, where plausibility falls off linearly with distance from the
      median level.
The scalar fitness is a weighted sum (goal-dominant by default); lower is
better throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import ModelBundle
from .errors import DataError, ModelError
from .learners import median_index
from .series import MultivariateSeries

DEFAULT_WEIGHTS = (1.0, 0.1, 0.1)
DEFAULT_EPSILON_REL = 0.05
PLAUSIBILITY_FLOOR = 1e-3
GOAL_SCALE_FLOOR = 1e-9


@dataclass(frozen=True)
class GoalSpec:
    """Desired terminal target value with a relative tolerance band."""

    goal_value: float
    horizon_steps: int
    epsilon_rel: float = DEFAULT_EPSILON_REL
    horizon_seconds: float = math.nan

    def __post_init__(self):
        if self.epsilon_rel <= 0:
            raise DataError("epsilon_rel must be positive")
        if self.horizon_steps < 1:
            raise DataError("horizon must be at least one step")

    def with_delta(self, delta_seconds: float) -> "GoalSpec":
        return GoalSpec(
            goal_value=self.goal_value,
            horizon_steps=self.horizon_steps,
            epsilon_rel=self.epsilon_rel,
            horizon_seconds=self.horizon_steps * delta_seconds,
        )


@dataclass(frozen=True)
class InterventionPolicy:
    """The genome: one quantile-alphabet index per (variable, step).

    Non-actionable variables are pinned to the median level at every step.
    """

    genes: np.ndarray
    actionable_mask: np.ndarray
    alphabet: tuple[float, ...]

    def __post_init__(self):
        genes = np.asarray(self.genes, dtype=np.int64)
        mask = np.asarray(self.actionable_mask, dtype=bool)
        alphabet = tuple(float(t) for t in self.alphabet)
        if genes.ndim != 2:
            raise DataError("genes must be a (V, N) grid")
        if mask.shape != (genes.shape[0],):
            raise DataError("actionable_mask must have one flag per variable")
        if genes.min(initial=0) < 0 or genes.max(initial=0) >= len(alphabet):
            raise DataError("gene index outside the alphabet")
        med = median_index(alphabet)
        if med is None:
            raise DataError("alphabet must contain level 0.5")
        if np.any(genes[~mask] != med):
            raise DataError("non-actionable variables must stay on the median path")
        genes.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "genes", genes)
        object.__setattr__(self, "actionable_mask", mask)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "_median_index", med)

    @property
    def n_variables(self) -> int:
        return self.genes.shape[0]

    @property
    def horizon(self) -> int:
        return self.genes.shape[1]

    @property
    def median_gene(self) -> int:
        return self._median_index

    def levels_grid(self) -> np.ndarray:
        """Quantile levels per (variable, step) as floats."""
        return np.asarray(self.alphabet, dtype=np.float64)[self.genes]

    def with_genes(self, genes: np.ndarray) -> "InterventionPolicy":
        return InterventionPolicy(
            genes=genes, actionable_mask=self.actionable_mask.copy(), alphabet=self.alphabet
        )

    @classmethod
    def all_median(cls, actionable_mask, alphabet, horizon: int) -> "InterventionPolicy":
        mask = np.asarray(actionable_mask, dtype=bool)
        med = median_index(alphabet)
        if med is None:
            raise DataError("alphabet must contain level 0.5")
        genes = np.full((mask.shape[0], horizon), med, dtype=np.int64)
        return cls(genes=genes, actionable_mask=mask, alphabet=tuple(alphabet))

    @classmethod
    def from_levels(cls, levels_grid, actionable_mask, alphabet) -> "InterventionPolicy":
        """Build from explicit quantile levels; each must belong to the alphabet."""
        grid = np.asarray(levels_grid, dtype=np.float64)
        alpha = np.asarray(alphabet, dtype=np.float64)
        genes = np.empty(grid.shape, dtype=np.int64)
        for idx, level in np.ndenumerate(grid):
            hits = np.nonzero(np.abs(alpha - level) <= 1e-9)[0]
            if hits.size == 0:
                raise DataError(f"level {level} at {idx} not in the alphabet")
            genes[idx] = hits[0]
        return cls(genes=genes, actionable_mask=actionable_mask, alphabet=tuple(alphabet))


@dataclass(frozen=True)
class ScenarioProjection:
    """Projected paths for all variables plus the target's forecast path."""

    paths: np.ndarray
    target_path: np.ndarray
    terminal: float
    likelihood: float

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=np.float64)
        target_path = np.asarray(self.target_path, dtype=np.float64)
        if paths.ndim != 2 or target_path.ndim != 1 or paths.shape[1] != target_path.shape[0]:
            raise DataError("paths must be (V, N) and target_path length N")
        if not (np.all(np.isfinite(paths)) and np.all(np.isfinite(target_path))):
            raise DataError("projection contains non-finite values")
        if not 0.0 < self.likelihood <= 1.0:
            raise DataError("likelihood must lie in (0, 1]")
        paths.setflags(write=False)
        target_path.setflags(write=False)
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "target_path", target_path)


@dataclass(frozen=True)
class ObjectiveValues:
    """The three objectives, the goal-relative gap, and their scalarization."""

    o1: float
    o1_rel: float
    o2: float
    o3: float
    fitness: float
    weights: tuple[float, float, float]

    def __post_init__(self):
        if not -1e-12 <= self.o2 <= 2.0 + 1e-12:
            raise DataError("o2 must lie in [0, 2]")
        expected = (
            self.weights[0] * self.o1_rel
            + self.weights[1] * self.o2
            + self.weights[2] * self.o3
        )
        if not math.isclose(self.fitness, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise DataError("fitness disagrees with the recorded weights")


class Projector:
    """Reusable projection kernel for one bundle.

    Gather indices into the rolling lag state are precomputed per bank, so
    repeated projections (the GA's population loop) avoid per-step Python
    bookkeeping.
    """

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle
        names = bundle.names
        name_to_idx = {n: i for i, n in enumerate(names)}
        self._bank_gather = []
        self._bank_weights = []
        self._bank_intercepts = []
        for name in names:
            bank = bundle.banks[name]
            var_idx = np.array([name_to_idx[v] for v, _ in bank.feature_columns])
            lag_idx = np.array([lag - 1 for _, lag in bank.feature_columns])
            self._bank_gather.append((var_idx, lag_idx))
            self._bank_weights.append(bank._weight_matrix)
            self._bank_intercepts.append(bank._intercepts)
        self._main_var = np.array([name_to_idx[v] for v, _ in bundle.main.feature_columns])
        self._main_lag = np.array([lag - 1 for _, lag in bundle.main.feature_columns])

    def project(self, history: MultivariateSeries, policy: InterventionPolicy) -> ScenarioProjection:
        bundle = self.bundle
        p = bundle.lag_order
        V = bundle.n_variables
        N = policy.horizon
        if history.names != bundle.names:
            raise DataError("history variables disagree with the bundle")
        if history.n_samples < p:
            raise DataError(f"history must supply at least {p} trailing rows")
        if policy.n_variables != V:
            raise DataError("policy dimensions disagree with the bundle")
        if policy.alphabet != bundle.levels:
            raise DataError("policy alphabet disagrees with the bundle levels")

        # state[i, k] = value of variable i at lag k+1 relative to the next step;
        # the main forecaster reads every lag (its own response included) from
        # this projected grid, so interventions on any variable reach the target
        state = history.values[-p:][::-1].T.copy()
        paths = np.empty((V, N))
        target_path = np.empty(N)
        genes = policy.genes
        for n in range(N):
            x_main = state[self._main_var, self._main_lag]
            y = float(x_main @ bundle.main.weights + bundle.main.intercept)
            if not math.isfinite(y):
                raise ModelError(f"non-finite target projection at step {n + 1}")
            step_vals = np.empty(V)
            for i in range(V):
                var_idx, lag_idx = self._bank_gather[i]
                x = state[var_idx, lag_idx]
                quantiles = np.sort(self._bank_weights[i] @ x + self._bank_intercepts[i])
                step_vals[i] = quantiles[genes[i, n]]
            if not np.all(np.isfinite(step_vals)):
                bad = bundle.names[int(np.nonzero(~np.isfinite(step_vals))[0][0])]
                raise ModelError(f"non-finite projection at step {n + 1}, variable {bad}")
            paths[:, n] = step_vals
            target_path[n] = y
            state[:, 1:] = state[:, :-1]
            state[:, 0] = step_vals
        return ScenarioProjection(
            paths=paths,
            target_path=target_path,
            terminal=float(target_path[-1]),
            likelihood=scenario_likelihood(policy),
        )


def project_scenario(
    bundle: ModelBundle, history: MultivariateSeries, policy: InterventionPolicy
) -> ScenarioProjection:
    """Project one scenario; see :class:`Projector` for the mechanics."""
    return Projector(bundle).project(history, policy)


def objective_o1(terminal: float, goal: GoalSpec) -> float:
    """Absolute distance between the projected terminal and the goal."""
    return abs(terminal - goal.goal_value)


def relative_goal_gap(terminal: float, goal: GoalSpec) -> float:
    """o1 scaled by the goal magnitude (floored to keep a zero goal finite)."""
    return objective_o1(terminal, goal) / max(abs(goal.goal_value), GOAL_SCALE_FLOOR)


def objective_o2(reference: np.ndarray, projection: np.ndarray) -> float:
    """Cosine dissimilarity 1 - cos(reference, projection), in [0, 2].

    Both operands are flattened (V * N)-vectors; callers normalize per
    variable with training statistics before flattening.
    """
    a = np.asarray(reference, dtype=np.float64).ravel()
    b = np.asarray(projection, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError("reference and projection must have equal length")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DataError("zero-norm vector in similarity objective")
    return 1.0 - float(a @ b) / (na * nb)


def gene_plausibility(tau: float) -> float:
    """Triangular plausibility of one gene: 1 at the median, floored at 1e-3."""
    if not 0.0 < tau < 1.0:
        raise DataError(f"tau must lie in (0, 1), got {tau}")
    return max(1.0 - 2.0 * abs(tau - 0.5), PLAUSIBILITY_FLOOR)


def objective_o3(policy: InterventionPolicy) -> float:
    """Mean negative log plausibility over actionable genes (0 if none)."""
    mask = policy.actionable_mask
    if not mask.any():
        return 0.0
    levels = policy.levels_grid()[mask]
    logs = [-math.log(gene_plausibility(t)) for t in levels.ravel()]
    return float(np.mean(logs))


def scenario_likelihood(policy: InterventionPolicy) -> float:
    """Geometric mean of gene plausibilities over actionable genes: exp(-o3)."""
    return math.exp(-objective_o3(policy))


def scalar_fitness(
    o1_rel: float, o2: float, o3: float, weights: tuple[float, float, float] = DEFAULT_WEIGHTS
) -> float:
    """Weighted-sum scalarization; lower is better; goal term must carry weight."""
    w1, w2, w3 = weights
    if w1 <= 0 or w2 < 0 or w3 < 0:
        raise DataError("weights must be nonnegative with w1 > 0")
    return w1 * o1_rel + w2 * o2 + w3 * o3


def satisfies_constraint(terminal: float, goal: GoalSpec) -> bool:
    """True iff the terminal lands inside the goal's relative tolerance band.

    An absolute floor of 1e-9 keeps a zero-valued goal satisfiable only by
    an (effectively) exact hit.
    """
    band = max(goal.epsilon_rel * abs(goal.goal_value), GOAL_SCALE_FLOOR)
    return abs(terminal - goal.goal_value) <= band


def reference_window(bundle: ModelBundle, history: MultivariateSeries, horizon: int) -> np.ndarray:
    """Flattened z-normalized view of the last ``horizon`` observed steps.

    Variable-major layout, matching the flattening of projection paths.
    """
    tail = history.tail_window(horizon)
    z = (tail.T - bundle.norm_mean[:, None]) / bundle.norm_std[:, None]
    return z.ravel()


def normalized_paths(bundle: ModelBundle, projection: ScenarioProjection) -> np.ndarray:
    z = (projection.paths - bundle.norm_mean[:, None]) / bundle.norm_std[:, None]
    return z.ravel()


def evaluate_objectives(
    bundle: ModelBundle,
    projection: ScenarioProjection,
    policy: InterventionPolicy,
    goal: GoalSpec,
    reference_z: np.ndarray,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> ObjectiveValues:
    o1 = objective_o1(projection.terminal, goal)
    o1_rel = relative_goal_gap(projection.terminal, goal)
    o2 = objective_o2(reference_z, normalized_paths(bundle, projection))
    o3 = objective_o3(policy)
    return ObjectiveValues(
        o1=o1,
        o1_rel=o1_rel,
        o2=o2,
        o3=o3,
        fitness=scalar_fitness(o1_rel, o2, o3, weights),
        weights=tuple(weights),
    )


def evaluate_policy(
    bundle: ModelBundle,
    history: MultivariateSeries,
    policy: InterventionPolicy,
    goal: GoalSpec,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> tuple[ScenarioProjection, ObjectiveValues]:
    """Project one policy and score it; convenience wrapper for one-offs."""
    projection = Projector(bundle).project(history, policy)
    reference = reference_window(bundle, history, policy.horizon)
    values = evaluate_objectives(bundle, projection, policy, goal, reference, weights)
    return projection, values

"""Genetic search over intervention policies.

Minimization: lower fitness is better.  Each generation runs tournament
selection, uniform crossover, sparse gene-resampling mutation, elitism, and
random immigrants replacing the worst non-elite individuals.  The search
stops early once the best individual's terminal lands inside the goal's
tolerance band, or after ``max_generations`` variation rounds.

Randomness comes from named substreams of one 64-bit seed: every
(generation, operator) pair owns its own generator, so the result is
bit-reproducible per seed and independent of how population evaluation is
scheduled.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .bundle import ModelBundle
from .errors import DataError
from .scenario import (
    DEFAULT_WEIGHTS,
    GoalSpec,
    InterventionPolicy,
    ObjectiveValues,
    Projector,
    ScenarioProjection,
    evaluate_objectives,
    reference_window,
    satisfies_constraint,
)
from .series import MultivariateSeries

_OP_INIT = 0
_OP_SELECT = 1
_OP_CROSS = 2
_OP_MUTATE = 3
_OP_IMMIGRANT = 4


def _stream(seed: int, generation: int, operator: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(generation, operator))
    )


@dataclass(frozen=True)
class GAConfig:
    """Search parameters; the defaults reproduce the reference configuration
    (population 200, mutation 0.25, crossover 0.75, tournament 3, immigrants
    10%, 100 generations, 5% early-stop tolerance)."""

    population_size: int = 200
    mutation_prob: float = 0.25
    crossover_prob: float = 0.75
    tournament_size: int = 3
    immigrant_rate: float = 0.10
    max_generations: int = 100
    tolerance_rel: float = 0.05
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    seed: int = 0
    elitism_count: int = 1

    def __post_init__(self):
        for name in ("mutation_prob", "crossover_prob", "immigrant_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value}")
        if self.population_size < max(2, self.tournament_size):
            raise DataError("population must be at least the tournament size (and 2)")
        if self.tournament_size < 1:
            raise DataError("tournament size must be >= 1")
        if self.max_generations < 0:
            raise DataError("max_generations must be nonnegative")
        if self.tolerance_rel <= 0:
            raise DataError("tolerance_rel must be positive")
        if self.elitism_count < 0 or self.elitism_count >= self.population_size:
            raise DataError("elitism_count must be in [0, population_size)")

    @property
    def immigrant_count(self) -> int:
        return round(self.immigrant_rate * self.population_size)


@dataclass(frozen=True)
class Individual:
    """A genome with its cached evaluation."""

    policy: InterventionPolicy
    objectives: ObjectiveValues
    projection: ScenarioProjection

    @property
    def fitness(self) -> float:
        return self.objectives.fitness


@dataclass(frozen=True)
class TraceRow:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_o1_rel: float
    evaluations: int
    wall_time_ms: float


@dataclass(frozen=True)
class SearchTrace:
    rows: tuple[TraceRow, ...]

    def __post_init__(self):
        best = math.inf
        for row in self.rows:
            if row.best_fitness > best + 1e-12:
                raise DataError("best fitness increased across generations")
            best = min(best, row.best_fitness)
        object.__setattr__(self, "rows", tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class SearchResult:
    best: Individual
    final_population: tuple[Individual, ...]
    trace: SearchTrace
    converged: bool
    generations_run: int
    seed: int
    config: GAConfig
    goal: GoalSpec


def init_population(
    dims: tuple[int, int],
    alphabet: tuple[float, ...],
    actionable_mask: np.ndarray,
    config: GAConfig,
    rng: np.random.Generator,
) -> list[InterventionPolicy]:
    """Uniform random genomes plus one all-median anchor (first element)."""
    V, N = dims
    anchor = InterventionPolicy.all_median(actionable_mask, alphabet, N)
    population = [anchor]
    mask = np.asarray(actionable_mask, dtype=bool)
    for _ in range(config.population_size - 1):
        genes = np.full((V, N), anchor.median_gene, dtype=np.int64)
        draws = rng.integers(0, len(alphabet), size=(int(mask.sum()), N))
        genes[mask] = draws
        population.append(anchor.with_genes(genes))
    return population


def tournament_select(
    population: list[Individual], k: int, rng: np.random.Generator
) -> Individual:
    """Best (lowest fitness) of k individuals sampled without replacement."""
    if not population:
        raise DataError("empty population")
    if k > len(population):
        raise DataError("tournament larger than the population")
    idx = rng.choice(len(population), size=k, replace=False)
    best = min(idx, key=lambda i: (population[i].fitness, i))
    return population[best]


def crossover(
    a: InterventionPolicy,
    b: InterventionPolicy,
    config: GAConfig,
    rng: np.random.Generator,
) -> InterventionPolicy:
    """Uniform crossover with probability crossover_prob, else a copy of a."""
    if a.genes.shape != b.genes.shape:
        raise DataError("parents have different dimensions")
    if rng.random() >= config.crossover_prob:
        return a.with_genes(a.genes.copy())
    take_a = rng.random(a.genes.shape) < 0.5
    return a.with_genes(np.where(take_a, a.genes, b.genes))


def mutate(
    policy: InterventionPolicy, config: GAConfig, rng: np.random.Generator
) -> InterventionPolicy:
    """Gated sparse mutation.

    With probability mutation_prob the individual mutates: each actionable
    gene is independently resampled from the alphabet at rate 2/t with
    t = V * N, so a mutating individual changes about two genes and the
    quantile paths keep their temporal coherence.
    """
    if rng.random() >= config.mutation_prob:
        return policy
    genes = policy.genes.copy()
    t = genes.size
    rate = min(2.0 / t, 1.0)
    hit = rng.random(genes.shape) < rate
    hit[~policy.actionable_mask] = False
    count = int(hit.sum())
    if count:
        genes[hit] = rng.integers(0, len(policy.alphabet), size=count)
    return policy.with_genes(genes)


def inject_immigrants(
    population: list[Individual],
    config: GAConfig,
    rng: np.random.Generator,
    evaluate,
) -> list[Individual]:
    """Replace the worst immigrant_count individuals (elites excluded)."""
    n_imm = config.immigrant_count
    if n_imm == 0:
        return population
    order = sorted(range(len(population)), key=lambda i: (population[i].fitness, i))
    replaceable = order[config.elitism_count :]
    victims = set(replaceable[-n_imm:])
    if not victims:
        return population
    template = population[0].policy
    mask = template.actionable_mask
    fresh: list[Individual] = []
    for _ in range(len(victims)):
        genes = np.full(template.genes.shape, template.median_gene, dtype=np.int64)
        genes[mask] = rng.integers(0, len(template.alphabet), size=(int(mask.sum()), template.horizon))
        fresh.append(evaluate(template.with_genes(genes)))
    out: list[Individual] = []
    fresh_iter = iter(fresh)
    for i, ind in enumerate(population):
        out.append(next(fresh_iter) if i in victims else ind)
    return out


def run_search(
    bundle: ModelBundle,
    history: MultivariateSeries,
    goal: GoalSpec,
    config: GAConfig,
    on_generation=None,
) -> SearchResult:
    """Evolve intervention policies toward the goal.

    Convergence means the best individual's terminal satisfies the goal
    constraint at config.tolerance_rel (which overrides goal.epsilon_rel, so
    the stored result is self-consistent).  Generation 0 is the evaluated
    initial population; each later generation is one variation round.
    ``on_generation`` receives every TraceRow as it is recorded.
    """
    goal = replace(goal, epsilon_rel=config.tolerance_rel)
    projector = Projector(bundle)
    reference = reference_window(bundle, history, goal.horizon_steps)
    evaluations = 0

    def evaluate(policy: InterventionPolicy) -> Individual:
        nonlocal evaluations
        projection = projector.project(history, policy)
        values = evaluate_objectives(
            bundle, projection, policy, goal, reference, config.weights
        )
        evaluations += 1
        return Individual(policy=policy, objectives=values, projection=projection)

    dims = (bundle.n_variables, goal.horizon_steps)
    rng = _stream(config.seed, 0, _OP_INIT)
    population = [
        evaluate(policy)
        for policy in init_population(
            dims, bundle.levels, bundle.actionable_mask, config, rng
        )
    ]

    rows: list[TraceRow] = []
    converged = False
    start = time.perf_counter()
    generation = 0
    while True:
        fitnesses = [ind.fitness for ind in population]
        best_idx = min(range(len(population)), key=lambda i: (fitnesses[i], i))
        best = population[best_idx]
        row = TraceRow(
            generation=generation,
            best_fitness=best.fitness,
            mean_fitness=float(np.mean(fitnesses)),
            best_o1_rel=best.objectives.o1_rel,
            evaluations=evaluations,
            wall_time_ms=(time.perf_counter() - start) * 1000.0,
        )
        rows.append(row)
        if on_generation is not None:
            on_generation(row)
        if satisfies_constraint(best.projection.terminal, goal):
            converged = True
            break
        if generation >= config.max_generations:
            break

        generation += 1
        sel_rng = _stream(config.seed, generation, _OP_SELECT)
        cross_rng = _stream(config.seed, generation, _OP_CROSS)
        mut_rng = _stream(config.seed, generation, _OP_MUTATE)
        imm_rng = _stream(config.seed, generation, _OP_IMMIGRANT)

        elite_order = sorted(range(len(population)), key=lambda i: (fitnesses[i], i))
        elites = [population[i] for i in elite_order[: config.elitism_count]]
        next_population = list(elites)
        while len(next_population) < config.population_size:
            parent_a = tournament_select(population, config.tournament_size, sel_rng)
            parent_b = tournament_select(population, config.tournament_size, sel_rng)
            child = crossover(parent_a.policy, parent_b.policy, config, cross_rng)
            child = mutate(child, config, mut_rng)
            next_population.append(evaluate(child))
        population = inject_immigrants(next_population, config, imm_rng, evaluate)

    order = sorted(range(len(population)), key=lambda i: (population[i].fitness, i))
    ranked = tuple(population[i] for i in order)
    return SearchResult(
        best=ranked[0],
        final_population=ranked,
        trace=SearchTrace(rows=tuple(rows)),
        converged=converged,
        generations_run=len(rows),
        seed=config.seed,
        config=config,
        goal=goal,
    )


def trace_to_csv(trace: SearchTrace) -> str:
    lines = ["generation,best,mean,best_o1_rel,millis"]
    for row in trace.rows:
        lines.append(
            f"{row.generation},{row.best_fitness:.17g},{row.mean_fitness:.17g},"
            f"{row.best_o1_rel:.17g},{row.wall_time_ms:.3f}"
        )
    return "\n".join(lines) + "\n"


def _projection_doc(projection: ScenarioProjection, policy: InterventionPolicy, names) -> dict:
    return {
        "paths": {name: list(projection.paths[i]) for i, name in enumerate(names)},
        "target_path": list(projection.target_path),
        "terminal": projection.terminal,
        "likelihood_percent": round(projection.likelihood * 100.0, 1),
        "levels": {name: list(policy.levels_grid()[i]) for i, name in enumerate(names)},
    }


def _objectives_doc(values: ObjectiveValues) -> dict:
    return {
        "o1": values.o1,
        "o1_rel": values.o1_rel,
        "o2": values.o2,
        "o3": values.o3,
        "fitness": values.fitness,
        "weights": list(values.weights),
    }


def result_to_json(result: SearchResult, names: tuple[str, ...]) -> str:
    """Deterministic JSON document for a finished search.

    Wall-clock trace timings are deliberately excluded (they live in the
    trace CSV) so identical seeds give byte-identical documents.
    """
    cfg = result.config
    doc = {
        "converged": result.converged,
        "generations_run": result.generations_run,
        "seed": result.seed,
        "goal": {
            "goal_value": result.goal.goal_value,
            "horizon_steps": result.goal.horizon_steps,
            "epsilon_rel": result.goal.epsilon_rel,
        },
        "config": {
            "population_size": cfg.population_size,
            "mutation_prob": cfg.mutation_prob,
            "crossover_prob": cfg.crossover_prob,
            "tournament_size": cfg.tournament_size,
            "immigrant_rate": cfg.immigrant_rate,
            "max_generations": cfg.max_generations,
            "tolerance_rel": cfg.tolerance_rel,
            "weights": list(cfg.weights),
            "seed": cfg.seed,
            "elitism_count": cfg.elitism_count,
        },
        "best": {
            "objectives": _objectives_doc(result.best.objectives),
            "projection": _projection_doc(result.best.projection, result.best.policy, names),
            "genes": result.best.policy.genes.tolist(),
        },
        "trace": [
            {
                "generation": row.generation,
                "best_fitness": row.best_fitness,
                "mean_fitness": row.mean_fitness,
                "best_o1_rel": row.best_o1_rel,
                "evaluations": row.evaluations,
            }
            for row in result.trace.rows
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"

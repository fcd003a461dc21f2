"""Counterfactual scenario search for multivariate time series.

The pipeline: ingest a regular multivariate series, learn per-variable
quantile banks with Granger-selected features plus a point forecaster for
the target, then search the space of quantile-indexed future paths with a
genetic algorithm for scenarios whose projected target hits a goal value
while staying similar to the present and statistically plausible.
"""

from .errors import CounterpathError, DataError, ModelError
from .series import (
    IngestConfig,
    IngestReport,
    LagDesign,
    MetricsReport,
    MultivariateSeries,
    SplitPlan,
    compute_metrics,
    load_csv,
    load_series,
    make_lag_design,
    save_series,
    walk_forward_splits,
)
from .learners import (
    DEFAULT_LEVELS,
    LinearModel,
    QuantileBank,
    QuantileModel,
    fit_bank,
    fit_quantile,
    fit_ridge,
    pinball_loss,
    predict_quantiles,
)
from .causality import (
    CausalityMatrix,
    GrangerResult,
    causality_matrix,
    export_heatmap,
    granger_pair,
    load_heatmap,
    paired_t_test,
    select_features,
    student_t_sf,
)
from .synth import VarSystemSpec, generate_var, standard_benchmarks
from .bundle import ModelBundle, load_bundle, save_bundle, train_bundle
from .scenario import (
    GoalSpec,
    InterventionPolicy,
    ObjectiveValues,
    Projector,
    ScenarioProjection,
    evaluate_policy,
    gene_plausibility,
    objective_o1,
    objective_o2,
    objective_o3,
    project_scenario,
    satisfies_constraint,
    scalar_fitness,
    scenario_likelihood,
)
from .ga import (
    GAConfig,
    Individual,
    SearchResult,
    SearchTrace,
    run_search,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

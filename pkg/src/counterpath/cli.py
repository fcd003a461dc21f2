"""Command-line front door: synth, train, evaluate, search, serve.

Exit codes: 0 success, 2 usage/config error, 3 search budget exhausted
without convergence, 4 data/model error.  Human-readable tables go to
stdout; machine artifacts (CSV/JSON) go to files.  Every subcommand is
deterministic under fixed seed and inputs.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bundle import (
    DEFAULT_FOLDS,
    DEFAULT_LAG_ORDER,
    load_bundle,
    save_bundle,
    train_bundle,
)
from .causality import export_heatmap
from .errors import CounterpathError, DataError
from .ga import GAConfig, result_to_json, run_search, trace_to_csv
from .learners import DEFAULT_EPOCHS, DEFAULT_LEVELS, DEFAULT_LR, fit_ridge
from .scenario import GoalSpec
from .series import (
    LagDesign,
    Stopwatch,
    compute_metrics,
    load_series,
    make_lag_design,
    save_series,
    walk_forward_splits,
)
from .synth import VarSystemSpec, generate_var, standard_benchmarks

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_DATA = 4

log = logging.getLogger("counterpath")


class _UsageError(CounterpathError):
    """Bad flag values; maps to the usage exit code."""


def _from_flags(builder):
    """Run a config-object builder, converting DataError to a usage error."""
    try:
        return builder()
    except DataError as exc:
        raise _UsageError(str(exc)) from None


def _parse_levels(text: str) -> tuple[float, ...]:
    try:
        levels = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise DataError(f"bad quantile alphabet {text!r}") from None
    return levels


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise DataError("weights must be three comma-separated numbers")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def cmd_synth(args) -> int:
    if args.bench:
        benchmarks = standard_benchmarks()
        if args.bench not in benchmarks:
            raise DataError(
                f"unknown benchmark {args.bench!r}; choose from {sorted(benchmarks)}"
            )
        spec = benchmarks[args.bench]
    else:
        spec = VarSystemSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    series = generate_var(spec, args.length, seed=args.seed)
    save_series(series, args.out)
    adjacency = spec.planted_adjacency()
    edges = [
        f"{spec.names[i]}->{spec.names[j]}"
        for i in range(len(spec.names))
        for j in range(len(spec.names))
        if i != j and adjacency[i, j]
    ]
    print(f"wrote series bundle to {args.out}")
    print(
        f"V={series.n_variables} T={series.n_samples} delta={series.delta_seconds:g}s "
        f"target={series.target_name}"
    )
    print(f"planted edges: {', '.join(edges) if edges else '(none)'}")
    return EXIT_OK


def cmd_train(args) -> int:
    levels = _from_flags(lambda: _parse_levels(args.levels))
    series = load_series(args.data)
    bundle = train_bundle(
        series,
        p=args.lag,
        levels=levels,
        n_folds=args.folds,
        min_train=args.min_train,
        epochs=args.epochs,
        lr=args.lr,
    )
    out = Path(args.out)
    save_bundle(bundle, out)
    heatmap = out.with_name(out.stem + "_heatmap.csv")
    export_heatmap(bundle.causality, heatmap)
    print(f"wrote model bundle to {out}")
    print(f"wrote causality heatmap to {heatmap}")
    print("per-variable mean pinball loss (z-scale):")
    for name in bundle.names:
        bank = bundle.banks[name]
        mean_loss = float(np.mean([m.final_loss for m in bank.models]))
        features = ", ".join(bank.feature_names)
        print(f"  {name}: {mean_loss:.4f}  (features: {features})")
    return EXIT_OK


def _evaluate_config(series, plan, response, included, p):
    """Pooled walk-forward metrics for one ridge configuration."""
    design = make_lag_design(series, response, included, p)
    preds, actuals = [], []
    fit_time = predict_time = 0.0
    for (_, train_end), (va_start, va_end) in plan.folds:
        train = slice(0, max(train_end - p, 0))
        val = slice(max(va_start - p, 0), va_end - p)
        sliced = LagDesign(
            rows=design.rows[train],
            targets=design.targets[train],
            lag_order=p,
            feature_columns=design.feature_columns,
            response=response,
        )
        with Stopwatch() as sw_fit:
            model = fit_ridge(sliced, 1e-6)
        with Stopwatch() as sw_pred:
            pred = model.predict(design.rows[val])
        fit_time += sw_fit.elapsed
        predict_time += sw_pred.elapsed
        preds.append(pred)
        actuals.append(design.targets[val])
    return compute_metrics(
        np.concatenate(preds),
        np.concatenate(actuals),
        wall_time_fit=fit_time,
        wall_time_predict=predict_time,
    )


def cmd_evaluate(args) -> int:
    series = load_series(args.data)
    p = args.lag
    min_train = args.min_train or max(p + 2, (4 * series.n_samples) // 5)
    plan = walk_forward_splits(series, args.folds, min_train)
    target = series.target_name

    rows = []
    rows.append(("ridge[all]", _evaluate_config(series, plan, target, list(series.names), p)))
    rows.append(("ridge[self]", _evaluate_config(series, plan, target, [target], p)))

    # naive last-value baseline over the same validation rows
    preds, actuals = [], []
    col = series.values[:, series.target_index]
    for _, (va_start, va_end) in plan.folds:
        preds.append(col[va_start - 1 : va_end - 1])
        actuals.append(col[va_start:va_end])
    rows.append(("naive[last]", compute_metrics(np.concatenate(preds), np.concatenate(actuals))))

    header = f"{'model':<12} {'mae':>10} {'mse':>10} {'r2':>10} {'mape':>10} {'fit_s':>8} {'pred_s':>8}"
    print(header)
    for name, m in rows:
        r2 = f"{m.r2:.4f}" if m.r2_defined else "undef"
        print(
            f"{name:<12} {m.mae:>10.4f} {m.mse:>10.4f} {r2:>10} {m.mape:>10.4f} "
            f"{m.wall_time_fit:>8.3f} {m.wall_time_predict:>8.3f}"
        )
    if args.out:
        lines = ["model,mae,mse,r2,mape,n,fit_seconds,predict_seconds"]
        for name, m in rows:
            r2 = f"{m.r2:.17g}" if m.r2_defined else ""
            lines.append(
                f"{name},{m.mae:.17g},{m.mse:.17g},{r2},{m.mape:.17g},{m.n},"
                f"{m.wall_time_fit:.6f},{m.wall_time_predict:.6f}"
            )
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote metrics CSV to {args.out}")
    return EXIT_OK


def cmd_search(args) -> int:
    config = _from_flags(
        lambda: GAConfig(
            population_size=args.population,
            mutation_prob=args.mutation,
            crossover_prob=args.crossover,
            tournament_size=args.tournament,
            immigrant_rate=args.immigrants,
            max_generations=args.generations,
            tolerance_rel=args.tolerance,
            weights=_parse_weights(args.weights),
            seed=args.seed,
            elitism_count=args.elitism,
        )
    )
    bundle = load_bundle(args.model)
    series = load_series(args.data)
    goal = _from_flags(
        lambda: GoalSpec(
            goal_value=args.goal,
            horizon_steps=args.horizon,
            epsilon_rel=args.tolerance,
        )
    ).with_delta(bundle.delta_ns / 1e9)
    result = run_search(bundle, series, goal, config)
    Path(args.out).write_text(result_to_json(result, bundle.names), encoding="utf-8")
    Path(args.trace).write_text(trace_to_csv(result.trace), encoding="utf-8")
    best = result.best
    print(f"converged={result.converged} generations={result.generations_run}")
    print(
        f"best: terminal={best.projection.terminal:.6g} goal={goal.goal_value:g} "
        f"o1_rel={best.objectives.o1_rel:.4f} fitness={best.objectives.fitness:.4f} "
        f"likelihood={best.projection.likelihood * 100:.1f}%"
    )
    print(f"wrote result JSON to {args.out}")
    print(f"wrote trace CSV to {args.trace}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    bundle = load_bundle(args.model)
    series = load_series(args.data)
    app = create_app(bundle=bundle, series=series)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counterpath",
        description="Counterfactual scenario search for multivariate time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic series bundle")
    group = p_synth.add_mutually_exclusive_group(required=True)
    group.add_argument("--bench", help="benchmark name (granger4, ga5, null2)")
    group.add_argument("--spec", help="path to a VAR spec JSON")
    p_synth.add_argument("--length", type=int, default=5000)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output series-bundle directory")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a model bundle on a series bundle")
    p_train.add_argument("--data", required=True, help="series-bundle directory")
    p_train.add_argument("--out", required=True, help="output bundle JSON path")
    p_train.add_argument("--lag", type=int, default=DEFAULT_LAG_ORDER)
    p_train.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    p_train.add_argument("--min-train", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p_train.add_argument("--lr", type=float, default=DEFAULT_LR)
    p_train.add_argument(
        "--levels", default=",".join(str(t) for t in DEFAULT_LEVELS),
        help="comma-separated quantile alphabet (must include 0.5)",
    )
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="walk-forward forecast metrics")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--lag", type=int, default=DEFAULT_LAG_ORDER)
    p_eval.add_argument("--folds", type=int, default=5)
    p_eval.add_argument("--min-train", type=int, default=None)
    p_eval.add_argument("--out", help="optional metrics CSV path")
    p_eval.set_defaults(func=cmd_evaluate)

    p_search = sub.add_parser("search", help="run the counterfactual GA search")
    p_search.add_argument("--model", required=True, help="model bundle JSON")
    p_search.add_argument("--data", required=True, help="series-bundle directory")
    p_search.add_argument("--goal", type=float, required=True)
    p_search.add_argument("--tolerance", type=float, default=0.05)
    p_search.add_argument(
        "--horizon", type=int, default=10,
        help="future steps to search (10 x 3s cadence = 30 seconds)",
    )
    p_search.add_argument("--population", type=int, default=200)
    p_search.add_argument("--mutation", type=float, default=0.25)
    p_search.add_argument("--crossover", type=float, default=0.75)
    p_search.add_argument("--tournament", type=int, default=3)
    p_search.add_argument("--immigrants", type=float, default=0.10)
    p_search.add_argument("--generations", type=int, default=100)
    p_search.add_argument("--elitism", type=int, default=1)
    p_search.add_argument("--weights", default="1.0,0.1,0.1")
    p_search.add_argument("--seed", type=int, default=0)
    p_search.add_argument("--out", default="search_result.json")
    p_search.add_argument("--trace", default="search_trace.csv")
    p_search.set_defaults(func=cmd_search)

    p_serve = sub.add_parser("serve", help="serve the HTTP API")
    p_serve.add_argument("--model", required=True)
    p_serve.add_argument("--data", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8099)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("COUNTERPATH_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CounterpathError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""HTTP/JSON facade: bundle metadata, synchronous what-if projection, and
asynchronous counterfactual search jobs polled by the UI.

Versioned under /api/v1.  Request bodies are strict (unknown fields are
rejected) and every error body has the shape {error, field?, detail}.
Search jobs run on a single-worker FIFO executor; at most four jobs may be
queued or running at once.  Job results are deterministic functions of the
request body, seed included.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .bundle import ModelBundle
from .errors import CounterpathError, DataError
from .ga import GAConfig, SearchResult, TraceRow, run_search
from .scenario import (
    GoalSpec,
    InterventionPolicy,
    Projector,
    evaluate_objectives,
    normalized_paths,
    objective_o2,
    objective_o3,
    reference_window,
)
from .series import MultivariateSeries

MAX_ACTIVE_JOBS = 4

JOB_QUEUED = "queued"
JOB_RUNNING = "running"
JOB_CONVERGED = "converged"
JOB_EXHAUSTED = "exhausted"
JOB_FAILED = "failed"


class SearchRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    goal: float
    horizon: int = Field(default=10, ge=1)
    tolerance: float = Field(default=0.05, gt=0)
    seed: int = 0
    population_size: int = Field(default=200, ge=2)
    mutation_prob: float = Field(default=0.25, ge=0, le=1)
    crossover_prob: float = Field(default=0.75, ge=0, le=1)
    tournament_size: int = Field(default=3, ge=1)
    immigrant_rate: float = Field(default=0.10, ge=0, le=1)
    max_generations: int = Field(default=100, ge=0)
    weights: tuple[float, float, float] = (1.0, 0.1, 0.1)

    def to_config(self) -> GAConfig:
        return GAConfig(
            population_size=self.population_size,
            mutation_prob=self.mutation_prob,
            crossover_prob=self.crossover_prob,
            tournament_size=self.tournament_size,
            immigrant_rate=self.immigrant_rate,
            max_generations=self.max_generations,
            tolerance_rel=self.tolerance,
            weights=tuple(self.weights),
            seed=self.seed,
        )


class ProjectRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: list[list[float]]
    goal: Optional[float] = None
    tolerance: float = Field(default=0.05, gt=0)


class SearchJob:
    """Mutable job record; every read/write happens under the registry lock."""

    def __init__(self, job_id: str, request: SearchRequest):
        self.id = job_id
        self.request = request
        self.state = JOB_QUEUED
        self.trace_rows: list[TraceRow] = []
        self.result: SearchResult | None = None
        self.error: str | None = None

    @property
    def active(self) -> bool:
        return self.state in (JOB_QUEUED, JOB_RUNNING)


def _error_body(error: str, detail: str, field: str | None = None) -> dict:
    body = {"error": error, "detail": detail}
    if field is not None:
        body["field"] = field
    return body


def _projection_payload(projection, policy, names) -> dict:
    return {
        "paths": {name: projection.paths[i].tolist() for i, name in enumerate(names)},
        "target_path": projection.target_path.tolist(),
        "terminal": projection.terminal,
        "likelihood_percent": round(projection.likelihood * 100.0, 1),
        "levels": {name: policy.levels_grid()[i].tolist() for i, name in enumerate(names)},
    }


def _trace_row_payload(row: TraceRow) -> dict:
    return {
        "generation": row.generation,
        "best_fitness": row.best_fitness,
        "mean_fitness": row.mean_fitness,
        "best_o1_rel": row.best_o1_rel,
    }


def create_app(
    bundle: ModelBundle | None = None,
    series: MultivariateSeries | None = None,
) -> FastAPI:
    app = FastAPI(title="counterpath", version=__version__)
    state = {
        "bundle": bundle,
        "series": series,
        "jobs": {},
        "lock": threading.Lock(),
        "executor": ThreadPoolExecutor(max_workers=1),
    }
    app.state.counterpath = state

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        loc = [str(part) for part in first.get("loc", ()) if part != "body"]
        return JSONResponse(
            status_code=400,
            content=_error_body(
                "validation", first.get("msg", "invalid request"), ".".join(loc) or None
            ),
        )

    @app.exception_handler(HTTPException)
    async def http_handler(request: Request, exc: HTTPException):
        if isinstance(exc.detail, dict):
            return JSONResponse(status_code=exc.status_code, content=exc.detail)
        return JSONResponse(
            status_code=exc.status_code,
            content=_error_body("http_error", str(exc.detail)),
        )

    def need_bundle() -> ModelBundle:
        if state["bundle"] is None:
            raise HTTPException(409, _error_body("no_bundle", "no model bundle loaded"))
        return state["bundle"]

    def need_series() -> MultivariateSeries:
        if state["series"] is None:
            raise HTTPException(409, _error_body("no_series", "no series loaded"))
        return state["series"]

    @app.get("/api/v1/health")
    def health():
        loaded = state["bundle"]
        return {
            "status": "ok",
            "version": __version__,
            "variables": 0 if loaded is None else loaded.n_variables,
        }

    @app.get("/api/v1/series/meta")
    def series_meta():
        b = need_bundle()
        return {
            "names": list(b.names),
            "delta_seconds": b.delta_ns / 1e9,
            "target": b.target_name,
            "actionable_mask": [bool(x) for x in b.actionable_mask],
            "levels": list(b.levels),
        }

    @app.get("/api/v1/series/window")
    def series_window(last: int = Query(...)):
        s = need_series()
        if last <= 0:
            raise HTTPException(
                400, _error_body("validation", "last must be positive", "last")
            )
        k = min(last, s.n_samples)
        tail = s.values[-k:]
        return {
            "timestamps": s.timestamps[-k:].tolist(),
            "columns": {name: tail[:, i].tolist() for i, name in enumerate(s.names)},
        }

    @app.get("/api/v1/causality")
    def causality():
        b = need_bundle()
        V = len(b.names)
        pv = [
            [None if i == j else float(b.causality.p_values[i, j]) for j in range(V)]
            for i in range(V)
        ]
        return {
            "names": list(b.names),
            "p_values": pv,
            "mask": [[bool(x) for x in row] for row in b.causality.mask],
            "convention": "row=cause, column=effect; diagonal undefined",
        }

    def _run_job(job: SearchJob):
        with state["lock"]:
            if job.state != JOB_QUEUED:
                return
            job.state = JOB_RUNNING
        try:
            goal = GoalSpec(
                goal_value=job.request.goal,
                horizon_steps=job.request.horizon,
                epsilon_rel=job.request.tolerance,
            ).with_delta(state["bundle"].delta_ns / 1e9)

            def on_generation(row: TraceRow):
                with state["lock"]:
                    job.trace_rows.append(row)

            result = run_search(
                state["bundle"], state["series"], goal, job.request.to_config(),
                on_generation=on_generation,
            )
            with state["lock"]:
                job.result = result
                job.state = JOB_CONVERGED if result.converged else JOB_EXHAUSTED
        except CounterpathError as exc:
            with state["lock"]:
                job.error = str(exc)
                job.state = JOB_FAILED

    @app.post("/api/v1/search", status_code=202)
    def submit_search(request: SearchRequest):
        need_bundle()
        need_series()
        try:
            request.to_config()
        except DataError as exc:
            raise HTTPException(400, _error_body("validation", str(exc))) from None
        with state["lock"]:
            active = sum(1 for j in state["jobs"].values() if j.active)
            if active >= MAX_ACTIVE_JOBS:
                raise HTTPException(
                    429,
                    _error_body(
                        "queue_full", f"at most {MAX_ACTIVE_JOBS} concurrent jobs"
                    ),
                )
            job = SearchJob(uuid.uuid4().hex, request)
            state["jobs"][job.id] = job
        state["executor"].submit(_run_job, job)
        return {"job_id": job.id}

    def _get_job(job_id: str) -> SearchJob:
        job = state["jobs"].get(job_id)
        if job is None:
            raise HTTPException(404, _error_body("unknown_job", f"no job {job_id}"))
        return job

    @app.get("/api/v1/search/{job_id}")
    def job_status(job_id: str):
        job = _get_job(job_id)
        with state["lock"]:
            rows = list(job.trace_rows)
            doc = {
                "id": job.id,
                "state": job.state,
                "goal": {
                    "goal_value": job.request.goal,
                    "horizon_steps": job.request.horizon,
                    "epsilon_rel": job.request.tolerance,
                },
                "seed": job.request.seed,
                "progress": {
                    "generation": rows[-1].generation if rows else 0,
                    "best_fitness": rows[-1].best_fitness if rows else None,
                    "best_o1_rel": rows[-1].best_o1_rel if rows else None,
                },
                "error": job.error,
                "result": None,
            }
            if job.result is not None:
                b = state["bundle"]
                best = job.result.best
                doc["result"] = {
                    "converged": job.result.converged,
                    "generations_run": job.result.generations_run,
                    "seed": job.result.seed,
                    "objectives": {
                        "o1": best.objectives.o1,
                        "o1_rel": best.objectives.o1_rel,
                        "o2": best.objectives.o2,
                        "o3": best.objectives.o3,
                        "fitness": best.objectives.fitness,
                        "weights": list(best.objectives.weights),
                    },
                    "projection": _projection_payload(best.projection, best.policy, b.names),
                }
        return doc

    @app.get("/api/v1/search/{job_id}/trace")
    def job_trace(job_id: str, from_generation: int = Query(0, alias="from", ge=0)):
        job = _get_job(job_id)
        with state["lock"]:
            rows = [
                _trace_row_payload(r)
                for r in job.trace_rows
                if r.generation >= from_generation
            ]
            return {"id": job.id, "state": job.state, "rows": rows}

    @app.post("/api/v1/project")
    def project(request: ProjectRequest):
        b = need_bundle()
        s = need_series()
        try:
            policy = InterventionPolicy.from_levels(
                request.levels, b.actionable_mask, b.levels
            )
        except DataError as exc:
            raise HTTPException(
                400, _error_body("invalid_policy", str(exc), "levels")
            ) from None
        try:
            projection = Projector(b).project(s, policy)
        except CounterpathError as exc:
            raise HTTPException(400, _error_body("projection_failed", str(exc))) from None
        payload = _projection_payload(projection, policy, b.names)
        if request.goal is not None:
            goal = GoalSpec(
                goal_value=request.goal,
                horizon_steps=policy.horizon,
                epsilon_rel=request.tolerance,
            )
            reference = reference_window(b, s, policy.horizon)
            values = evaluate_objectives(b, projection, policy, goal, reference)
            payload["objectives"] = {
                "o1": values.o1,
                "o1_rel": values.o1_rel,
                "o2": values.o2,
                "o3": values.o3,
                "fitness": values.fitness,
                "weights": list(values.weights),
            }
        else:
            reference = reference_window(b, s, policy.horizon)
            o2 = objective_o2(reference, normalized_paths(b, projection))
            o3 = objective_o3(policy)
            payload["objectives"] = {
                "o1": None,
                "o1_rel": None,
                "o2": o2,
                "o3": o3,
                "fitness": None,
                "weights": None,
            }
        return payload

    return app

"""HTTP annotation service: live retrieval sessions over JSON.

Endpoints (all ids are decimal sample indices):

- ``POST /v1/sessions``                         create + first batch
- ``GET  /v1/sessions/{id}/batch``              outstanding batch
- ``POST /v1/sessions/{id}/labels``             submit labels, get next batch
- ``GET  /v1/sessions/{id}/state``              read-only snapshot
- ``GET  /v1/datasets``                         server-configured datasets
- ``GET  /v1/datasets/{name}/samples/{id}/image`` thumbnail when available

Errors are JSON objects ``{code, message, details}``. Batches are absorbed
atomically: any 4xx leaves the session unchanged. Requests for one session
serialize on a per-session lock; distinct sessions run concurrently, and
iteration compute stays on the request path to keep the loop synchronous.

In demo mode the server knows the target class (taken from the request or
inferred from the first positive's oracle label) and can auto-label a batch
when the client submits ``{"auto": true}``; coverage and discovery metrics
are reported whenever the target class is known.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .data import EmbeddedDataset
from .classifier import predict
from .metrics import CoverageConfig, build_class_clusters
from .session import (
    Query,
    SessionConfig,
    SessionEvaluator,
    SessionState,
    absorb_batch,
    init_session,
    propose_batch,
)
from .strategies import STRATEGY_TOKENS, SelectionBatch


class ApiError(Exception):
    """Carries the wire error shape: {code, message, details}."""

    def __init__(self, status: int, code: str, message: str,
                 details: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details or {}


class SessionConfigBody(BaseModel):
    b: int | None = None
    T: int | None = None
    seed: int | None = None


class CreateSessionBody(BaseModel):
    dataset: str
    strategy: str = "pfma"
    positive_ids: list[int]
    negative_ids: list[int]
    target_class: int | None = None
    config: SessionConfigBody | None = None


class LabelItem(BaseModel):
    sample_id: int
    relevant: bool


class SubmitLabelsBody(BaseModel):
    labels: list[LabelItem] = Field(default_factory=list)
    auto: bool = False


class LiveSession:
    """One session plus its lock, pending batch, and metric history."""

    def __init__(self, session_id: str, dataset_name: str,
                 dataset: EmbeddedDataset, config: SessionConfig,
                 query: Query, evaluator: SessionEvaluator | None):
        self.session_id = session_id
        self.dataset_name = dataset_name
        self.dataset = dataset
        self.config = config
        self.query = query
        self.evaluator = evaluator
        self.lock = threading.Lock()
        self.state: SessionState = init_session(dataset, query, config)
        self.metrics: list[dict] = []
        self.phase = "ready"
        if evaluator is not None:
            evaluator.record_positives(query.positive_ids)

    @property
    def target_class(self) -> int | None:
        return self.query.target_class

    def propose(self) -> SelectionBatch | None:
        batch = propose_batch(self.state, self.dataset, self.config)
        self.phase = "awaiting_labels" if batch is not None else "finished"
        return batch

    def absorb(self, labels: np.ndarray) -> None:
        batch = self.state.pending_batch
        absorb_batch(self.state, batch, labels, self.config)
        row = {
            "iteration": self.state.t,
            "cov": None,
            "pos": None,
            "batch_ratio": self.state.log[-1].positive_ratio,
            "f1": None,
        }
        if self.evaluator is not None:
            record = self.state.log[-1]
            self.evaluator.record_positives(
                record.batch_ids[record.labels == 1])
            row["cov"] = self.evaluator.coverage
            row["pos"] = self.evaluator.discovery_rate
            row["f1"] = self.evaluator.f1(self.state.model)
        self.metrics.append(row)
        self.phase = "finished" if self.state.finished else "ready"

    def batch_payload(self) -> dict:
        batch = self.state.pending_batch
        scores = predict(self.state.model, batch.sample_ids, self.dataset)
        has_images = self.dataset.manifest.image_paths is not None
        items = []
        for sample_id, value, score in zip(batch.sample_ids.tolist(),
                                           batch.values.tolist(),
                                           scores.tolist()):
            items.append({
                "sample_id": sample_id,
                "score": score,
                "criterion": value,
                "image_url": (
                    f"/v1/datasets/{self.dataset_name}/samples/{sample_id}/image"
                    if has_images else None
                ),
            })
        return {"iteration": batch.iteration, "items": items}

    def handle_payload(self) -> dict:
        outstanding = self.state.pending_batch is not None
        return {
            "session_id": self.session_id,
            "dataset": self.dataset_name,
            "strategy": self.config.strategy,
            "phase": self.phase,
            "t": self.state.t + (1 if outstanding else 0),
            "budget": self.config.b,
            "max_iterations": self.config.T,
        }

    def series_payload(self) -> dict:
        return {
            "iteration": [m["iteration"] for m in self.metrics],
            "cov": [m["cov"] for m in self.metrics],
            "pos": [m["pos"] for m in self.metrics],
            "batch_ratio": [m["batch_ratio"] for m in self.metrics],
            "f1": [m["f1"] for m in self.metrics],
        }

    def discovered_from_feedback(self) -> list[int]:
        return [int(i) for i in
                self.state.discovered.ids[self.query.positive_ids.size:]]


class EventLog:
    """Optional append-only JSONL log for crash recovery."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        line = json.dumps({"ts": time.time(), **event})
        with self._lock:
            with self.path.open("a") as fh:
                fh.write(line + "\n")


def create_app(datasets: dict[str, EmbeddedDataset], demo: bool = False,
               default_config: SessionConfig | None = None,
               coverage_config: CoverageConfig | None = None,
               event_log_path: Path | str | None = None) -> FastAPI:
    """Build the service around preloaded datasets."""
    app = FastAPI(title="rarefind annotation service")
    base_config = default_config or SessionConfig()
    cov_config = coverage_config or CoverageConfig()
    sessions: dict[str, LiveSession] = {}
    registry_lock = threading.Lock()
    cluster_cache: dict[tuple[str, int], object] = {}
    cluster_lock = threading.Lock()
    event_log = EventLog(Path(event_log_path)) if event_log_path else None

    app.state.sessions = sessions
    app.state.demo = demo

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={
            "code": exc.code, "message": exc.message, "details": exc.details,
        })

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "invalid_request",
            "message": "request body failed validation",
            "details": {"errors": json.loads(exc.json())},
        })

    def _get_dataset(name: str) -> EmbeddedDataset:
        dataset = datasets.get(name)
        if dataset is None:
            raise ApiError(404, "unknown_dataset", f"no dataset named {name!r}",
                           {"available": sorted(datasets)})
        return dataset

    def _get_session(session_id: str) -> LiveSession:
        with registry_lock:
            live = sessions.get(session_id)
        if live is None:
            raise ApiError(404, "unknown_session",
                           f"no session {session_id!r}")
        return live

    def _clusters_for(name: str, dataset: EmbeddedDataset, class_id: int):
        key = (name, class_id)
        with cluster_lock:
            if key not in cluster_cache:
                cluster_cache[key] = build_class_clusters(dataset, class_id,
                                                          cov_config)
            return cluster_cache[key]

    def _build_session(body: CreateSessionBody,
                       session_id: str | None = None) -> LiveSession:
        dataset = _get_dataset(body.dataset)
        if body.strategy not in STRATEGY_TOKENS:
            raise ApiError(422, "unknown_strategy",
                           f"strategy {body.strategy!r} is not recognized",
                           {"available": list(STRATEGY_TOKENS)})
        positives = np.asarray(sorted(set(body.positive_ids)), dtype=np.int64)
        negatives = np.asarray(sorted(set(body.negative_ids)), dtype=np.int64)
        if positives.size == 0 or negatives.size == 0:
            raise ApiError(422, "single_class_query",
                           "query needs at least one positive and one negative")
        clash = np.intersect1d(positives, negatives)
        if clash.size:
            raise ApiError(422, "invalid_ids",
                           "ids appear as both positive and negative",
                           {"ids": clash.tolist()})
        pool = dataset.pool_indices
        outside = np.setdiff1d(np.concatenate([positives, negatives]), pool)
        if outside.size:
            raise ApiError(422, "invalid_ids",
                           "ids outside the retrieval pool",
                           {"ids": outside.tolist()})

        overrides = body.config or SessionConfigBody()
        config = replace(
            base_config,
            strategy=body.strategy,
            b=overrides.b if overrides.b is not None else base_config.b,
            T=overrides.T if overrides.T is not None else base_config.T,
            seed=overrides.seed if overrides.seed is not None else base_config.seed,
        )

        target = body.target_class
        if target is None and demo:
            target = int(dataset.oracle_labels[positives[0]])
        evaluator = None
        if target is not None:
            if not (0 <= target < dataset.num_classes):
                raise ApiError(422, "invalid_ids",
                               f"target class {target} out of range")
            clusters = _clusters_for(body.dataset, dataset, target)
            evaluator = SessionEvaluator(dataset, target, clusters)

        query = Query(positives, negatives, target_class=target)
        return LiveSession(session_id or uuid.uuid4().hex, body.dataset,
                           dataset, config, query, evaluator)

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        live = _build_session(body)
        with live.lock:
            batch = live.propose()
            if batch is None:
                raise ApiError(422, "empty_pool",
                               "no unlabeled samples to select from")
            payload = {**live.handle_payload(), "batch": live.batch_payload()}
        with registry_lock:
            sessions[live.session_id] = live
        if event_log:
            event_log.append({
                "event": "create", "session_id": live.session_id,
                "dataset": body.dataset, "strategy": body.strategy,
                "positive_ids": body.positive_ids,
                "negative_ids": body.negative_ids,
                "target_class": live.target_class,
                "config": {"b": live.config.b, "T": live.config.T,
                           "seed": live.config.seed},
            })
        return payload

    @app.get("/v1/sessions/{session_id}/batch")
    def get_batch(session_id: str):
        live = _get_session(session_id)
        with live.lock:
            if live.phase != "awaiting_labels":
                raise ApiError(409, "wrong_phase",
                               f"no batch outstanding (phase={live.phase})")
            return {**live.handle_payload(), "batch": live.batch_payload()}

    def _labels_for_submission(live: LiveSession,
                               body: SubmitLabelsBody) -> np.ndarray:
        batch_ids = live.state.pending_batch.sample_ids
        if body.auto:
            if live.target_class is None:
                raise ApiError(422, "auto_unavailable",
                               "auto-labeling needs demo mode or a target class")
            oracle = live.dataset.oracle_labels[batch_ids]
            return (oracle == live.target_class).astype(np.int64)

        submitted = [(item.sample_id, item.relevant) for item in body.labels]
        seen: dict[int, bool] = {}
        duplicates = []
        for sample_id, relevant in submitted:
            if sample_id in seen:
                duplicates.append(sample_id)
            seen[sample_id] = relevant
        expected = set(batch_ids.tolist())
        unknown = sorted(set(seen) - expected)
        missing = sorted(expected - set(seen))
        if duplicates or unknown or missing:
            raise ApiError(422, "label_mismatch",
                           "labels must cover the outstanding batch exactly once",
                           {"unknown_ids": unknown, "missing_ids": missing,
                            "duplicate_ids": sorted(set(duplicates))})
        return np.array([int(seen[i]) for i in batch_ids.tolist()],
                        dtype=np.int64)

    @app.post("/v1/sessions/{session_id}/labels")
    def submit_labels(session_id: str, body: SubmitLabelsBody):
        live = _get_session(session_id)
        with live.lock:
            if live.phase != "awaiting_labels":
                raise ApiError(409, "wrong_phase",
                               f"no batch outstanding (phase={live.phase})")
            labels = _labels_for_submission(live, body)
            live.absorb(labels)
            if event_log:
                event_log.append({
                    "event": "labels", "session_id": session_id,
                    "labels": [[int(i), int(l)] for i, l in
                               zip(live.state.log[-1].batch_ids, labels)],
                })
            latest = live.metrics[-1]
            if not live.state.finished:
                batch = live.propose()
                if batch is not None:
                    return {**live.handle_payload(),
                            "latest_metrics": latest,
                            "batch": live.batch_payload()}
            live.phase = "finished"
            return {
                **live.handle_payload(),
                "latest_metrics": latest,
                "summary": {
                    "iterations": live.state.t,
                    "labeled": live.state.labeled_count(),
                    "discovered": live.discovered_from_feedback(),
                    "series": live.series_payload(),
                },
            }

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        live = _get_session(session_id)
        with live.lock:
            return {
                **live.handle_payload(),
                "metrics": live.series_payload(),
                "discovered": live.discovered_from_feedback(),
                "labeled_count": live.state.labeled_count(),
            }

    @app.get("/v1/datasets")
    def list_datasets():
        return {
            "datasets": [
                {
                    "name": name,
                    "num_samples": ds.num_samples,
                    "dim": ds.dim,
                    "num_classes": ds.num_classes,
                    "pool_size": int(ds.pool_indices.size),
                    "has_images": ds.manifest.image_paths is not None,
                }
                for name, ds in sorted(datasets.items())
            ]
        }

    @app.get("/v1/datasets/{name}/samples/{sample_id}/image")
    def get_image(name: str, sample_id: int):
        dataset = _get_dataset(name)
        paths = dataset.manifest.image_paths
        if paths is None or not (0 <= sample_id < len(paths)):
            raise ApiError(404, "no_image",
                           f"no image for sample {sample_id} of {name!r}")
        image_path = Path(paths[sample_id])
        if not image_path.is_file():
            raise ApiError(404, "no_image", f"image file missing: {image_path}")
        return FileResponse(image_path)

    def _replay_event(event: dict) -> None:
        if event["event"] == "create":
            body = CreateSessionBody(
                dataset=event["dataset"], strategy=event["strategy"],
                positive_ids=event["positive_ids"],
                negative_ids=event["negative_ids"],
                target_class=event.get("target_class"),
                config=SessionConfigBody(**event.get("config", {})),
            )
            live = _build_session(body, session_id=event["session_id"])
            with live.lock:
                live.propose()
            with registry_lock:
                sessions[live.session_id] = live
        elif event["event"] == "labels":
            live = _get_session(event["session_id"])
            with live.lock:
                order = {int(i): int(l) for i, l in event["labels"]}
                batch_ids = live.state.pending_batch.sample_ids
                labels = np.array([order[int(i)] for i in batch_ids],
                                  dtype=np.int64)
                live.absorb(labels)
                if not live.state.finished:
                    live.propose()

    app.state.replay_event = _replay_event
    return app


def restore_sessions(app: FastAPI, log_path: Path | str) -> int:
    """Rebuild in-memory sessions from an append-only event log."""
    count = 0
    for line in Path(log_path).read_text().splitlines():
        if not line.strip():
            continue
        app.state.replay_event(json.loads(line))
        count += 1
    return count

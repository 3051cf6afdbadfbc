"""Read-only HTTP service for interactive retrieval and experiment browsing.

All state is loaded at startup and immutable afterwards. Scoring goes
through one process-wide lock: the JIT kernels use a threading layer that
must not be entered concurrently, and requests are cheap at the scale this
serves. The heatmap cache is keyed by the full request surface and filled
under the same lock, so concurrent identical requests compute once.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from cirfuse.evaluation import DEFAULT_KS, DEFAULT_SUBSET_KS
from cirfuse.experiments import ablation_reports, default_grid, grid_tables, load_pair
from cirfuse.fusion import DegenerateQueryError, RetrievalParams, compose_query
from cirfuse.ranking import exclusion_rows, fuse_scores, score_candidates, top_k
from cirfuse.reporting import params_to_dict
from cirfuse.store import GalleryIndex, QuerySet, StoreError, normalize_rows

DEFAULT_HEATMAP_CELL_BUDGET = 2000
MAX_PAGE_LIMIT = 500


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class LoadedDataset:
    gallery: GalleryIndex
    queries: QuerySet


class RetrieveRequest(BaseModel):
    dataset: str
    query_id: str | None = None
    reference_id: str | None = None
    modifier_vector: list[float] | None = None
    alpha: float = 0.8
    beta: float = 0.1
    k: int = Field(default=50, ge=1)
    caption_subset: list[int] | None = None
    exclude_reference: bool = False


class ResultEntry(BaseModel):
    item_id: str
    score: float
    image_score: float
    caption_score: float
    is_target: bool | None = None
    image_url: str | None = None
    captions: list[str] | None = None


class RetrieveResponse(BaseModel):
    dataset: str
    query_id: str | None = None
    reference_id: str
    modifier_text: str | None = None
    target_item_id: str | None = None
    params: dict
    entries: list[ResultEntry]
    timing_ms: float


def _error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _params_from(req: RetrieveRequest) -> RetrievalParams:
    try:
        return RetrievalParams(
            alpha=req.alpha,
            beta=req.beta,
            k=req.k,
            caption_subset=tuple(req.caption_subset) if req.caption_subset else None,
            exclude_reference=req.exclude_reference,
        )
    except ValueError as exc:
        raise ApiError(400, "invalid_parameter", str(exc)) from exc


def _parse_grid(text: str | None, name: str) -> tuple[float, ...]:
    if text is None:
        return default_grid()
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ApiError(400, "invalid_parameter", f"bad {name} list: {text!r}") from exc
    if not values:
        raise ApiError(400, "invalid_parameter", f"{name} list is empty")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ApiError(400, "invalid_parameter", f"{name} value {v} outside [0, 1]")
    return values


def _parse_subset(text: str | None) -> tuple[int, ...] | None:
    if text is None or not text.strip():
        return None
    try:
        return tuple(int(p) for p in text.replace("+", ",").split(",") if p.strip())
    except ValueError as exc:
        raise ApiError(400, "invalid_parameter", f"bad caption subset: {text!r}") from exc


def create_app(
    datasets: dict[str, LoadedDataset],
    ui_dir: str | Path | None = None,
    heatmap_cell_budget: int = DEFAULT_HEATMAP_CELL_BUDGET,
) -> FastAPI:
    if not datasets:
        raise ValueError("at least one dataset must be loaded")
    app = FastAPI(title="cirfuse", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.datasets = datasets
    app.state.compute_lock = threading.Lock()
    app.state.heatmap_cache = {}
    app.state.heatmap_computes = 0
    app.state.heatmap_cell_budget = heatmap_cell_budget

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=_error_body(exc.code, exc.message))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content=_error_body("invalid_request", str(exc.errors()[:3])),
        )

    def dataset_or_404(name: str) -> LoadedDataset:
        try:
            return datasets[name]
        except KeyError:
            known = ", ".join(sorted(datasets))
            raise ApiError(
                404, "unknown_dataset", f"no dataset {name!r}; loaded: {known}"
            ) from None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "datasets": sorted(datasets)}

    @app.get("/v1/datasets")
    def list_datasets():
        rows = []
        for name in sorted(datasets):
            loaded = datasets[name]
            gallery = loaded.gallery
            rows.append(
                {
                    "dataset": name,
                    "split": gallery.meta.split,
                    "embedder_id": gallery.meta.embedder_id,
                    "num_items": gallery.num_items,
                    "captions_per_item": gallery.captions_per_item,
                    "dim": gallery.dim,
                    "num_queries": len(loaded.queries),
                }
            )
        return {"datasets": rows}

    @app.get("/v1/queries")
    def list_queries(dataset: str, offset: int = 0, limit: int = 50):
        loaded = dataset_or_404(dataset)
        if offset < 0 or limit < 1:
            raise ApiError(400, "invalid_parameter", "offset must be >= 0 and limit >= 1")
        limit = min(limit, MAX_PAGE_LIMIT)
        gallery = loaded.gallery
        urls = gallery.meta.image_urls or {}
        page = loaded.queries.records[offset : offset + limit]
        return {
            "dataset": dataset,
            "total": len(loaded.queries),
            "offset": offset,
            "limit": limit,
            "queries": [
                {
                    "query_id": r.query_id,
                    "reference_id": r.reference_id,
                    "target_id": r.target_id,
                    "modifier_text": r.modifier_text,
                    "category": r.category,
                    "subset_ids": list(r.subset_ids) if r.subset_ids else None,
                    "reference_image_url": urls.get(r.reference_id),
                }
                for r in page
            ],
        }

    @app.post("/v1/retrieve")
    def retrieve_endpoint(req: RetrieveRequest) -> RetrieveResponse:
        loaded = dataset_or_404(req.dataset)
        gallery = loaded.gallery
        params = _params_from(req)

        inline = req.reference_id is not None or req.modifier_vector is not None
        if (req.query_id is None) == (not inline):
            raise ApiError(
                400,
                "invalid_request",
                "provide exactly one of query_id or reference_id+modifier_vector",
            )
        modifier_text = None
        target_id = None
        if req.query_id is not None:
            try:
                idx = loaded.queries.index_of(req.query_id)
            except StoreError:
                raise ApiError(
                    404, "unknown_query", f"no query {req.query_id!r} in {req.dataset!r}"
                ) from None
            record = loaded.queries.records[idx]
            reference_id = record.reference_id
            modifier = loaded.queries.modifier_vectors.data[idx]
            modifier_text = record.modifier_text
            target_id = record.target_id
        else:
            if req.reference_id is None or req.modifier_vector is None:
                raise ApiError(
                    400,
                    "invalid_request",
                    "inline form needs both reference_id and modifier_vector",
                )
            reference_id = req.reference_id
            if len(req.modifier_vector) != gallery.dim:
                raise ApiError(
                    400,
                    "invalid_parameter",
                    f"modifier_vector has {len(req.modifier_vector)} values, "
                    f"gallery dim is {gallery.dim}",
                )
            try:
                modifier = normalize_rows(
                    np.asarray([req.modifier_vector], dtype=np.float32), "modifier_vector"
                ).data[0]
            except StoreError as exc:
                raise ApiError(400, "invalid_parameter", str(exc)) from exc

        try:
            reference_row = gallery.row_of(reference_id)
        except StoreError:
            raise ApiError(
                404, "unknown_item", f"no item {reference_id!r} in {req.dataset!r}"
            ) from None

        started = time.perf_counter()
        with app.state.compute_lock:
            try:
                q, qnorm = compose_query(
                    gallery.image_vectors.row(reference_row), modifier, params.alpha
                )
            except DegenerateQueryError as exc:
                raise ApiError(422, "degenerate_query", str(exc)) from exc
            try:
                q2i, q2c = score_candidates(gallery, q, qnorm, params.caption_subset)
            except ValueError as exc:
                raise ApiError(400, "invalid_parameter", str(exc)) from exc
            fused = fuse_scores(q2i, q2c, params.beta)
            excluded = exclusion_rows(gallery, params, reference_row)
            items = top_k(gallery, fused, params.k, excluded)
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        urls = gallery.meta.image_urls or {}
        texts = gallery.meta.caption_texts or {}
        entries = []
        for it in items:
            row = gallery.row_of(it.item_id)
            entries.append(
                ResultEntry(
                    item_id=it.item_id,
                    score=it.score,
                    image_score=float(q2i[row]),
                    caption_score=float(q2c[row]),
                    is_target=(it.item_id == target_id) if target_id is not None else None,
                    image_url=urls.get(it.item_id),
                    captions=list(texts[it.item_id]) if it.item_id in texts else None,
                )
            )
        return RetrieveResponse(
            dataset=req.dataset,
            query_id=req.query_id,
            reference_id=reference_id,
            modifier_text=modifier_text,
            target_item_id=target_id,
            params=params_to_dict(params),
            entries=entries,
            timing_ms=elapsed_ms,
        )

    @app.get("/v1/heatmap")
    def heatmap_endpoint(
        dataset: str,
        metric: str | None = None,
        alphas: str | None = None,
        betas: str | None = None,
        caption_subset: str | None = None,
        exclude_reference: bool = False,
    ):
        loaded = dataset_or_404(dataset)
        alpha_grid = _parse_grid(alphas, "alphas")
        beta_grid = _parse_grid(betas, "betas")
        subset = _parse_subset(caption_subset)
        cells = len(alpha_grid) * len(beta_grid)
        if cells > app.state.heatmap_cell_budget:
            raise ApiError(
                400,
                "grid_too_large",
                f"{cells} cells exceed the budget of {app.state.heatmap_cell_budget}; "
                "pass smaller alphas/betas lists",
            )
        key = (dataset, metric, alpha_grid, beta_grid, subset, exclude_reference)
        with app.state.compute_lock:
            cached = key in app.state.heatmap_cache
            if not cached:
                metrics = (metric,) if metric is not None else None
                try:
                    table = grid_tables(
                        loaded.gallery,
                        loaded.queries,
                        alpha_grid,
                        beta_grid,
                        caption_subset=subset,
                        exclude_reference=exclude_reference,
                        metrics=metrics,
                    )[0]
                except ValueError as exc:
                    raise ApiError(400, "unknown_metric", str(exc)) from exc
                app.state.heatmap_computes += 1
                app.state.heatmap_cache[key] = {
                    "dataset": dataset,
                    "metric": table.metric,
                    "alphas": list(table.alphas),
                    "betas": list(table.betas),
                    "values": [list(row) for row in table.values],
                }
            body = dict(app.state.heatmap_cache[key])
        body["cached"] = cached
        return body

    @app.get("/v1/ablation")
    def ablation_endpoint(
        dataset: str,
        subsets: str | None = None,
        alpha: float = 0.8,
        beta: float = 0.1,
        exclude_reference: bool = False,
    ):
        loaded = dataset_or_404(dataset)
        chosen: Sequence[tuple[int, ...]] | None = None
        if subsets:
            chosen = []
            for group in subsets.split(";"):
                parsed = _parse_subset(group)
                if parsed:
                    chosen.append(parsed)
            if not chosen:
                raise ApiError(400, "invalid_parameter", f"no subsets in {subsets!r}")
        try:
            params = RetrievalParams(
                alpha=alpha, beta=beta, exclude_reference=exclude_reference
            )
        except ValueError as exc:
            raise ApiError(400, "invalid_parameter", str(exc)) from exc
        with app.state.compute_lock:
            try:
                results = ablation_reports(
                    loaded.gallery,
                    loaded.queries,
                    params,
                    chosen,
                    DEFAULT_KS,
                    DEFAULT_SUBSET_KS,
                )
            except ValueError as exc:
                raise ApiError(400, "invalid_parameter", str(exc)) from exc
        return {
            "dataset": dataset,
            "params": params_to_dict(params),
            "rows": [
                {"caption_subset": list(subset), "metrics": dict(report.per_metric)}
                for subset, report in results
            ],
        }

    if ui_dir is not None:
        ui_path = Path(ui_dir)
        if not ui_path.is_dir():
            raise ValueError(f"UI directory not found: {ui_path}")
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return {
                "service": "cirfuse",
                "endpoints": [
                    "/v1/datasets",
                    "/v1/queries",
                    "/v1/retrieve",
                    "/v1/heatmap",
                    "/v1/ablation",
                    "/healthz",
                ],
            }

    return app


def load_datasets(pairs: Sequence[tuple[Path, Path]]) -> dict[str, LoadedDataset]:
    """Load gallery/queries pairs, keyed by dataset name; names must be unique."""
    datasets: dict[str, LoadedDataset] = {}
    for gallery_path, queries_path in pairs:
        gallery, queries = load_pair(gallery_path, queries_path)
        name = gallery.meta.dataset
        if name in datasets:
            raise StoreError(
                f"two galleries declare dataset {name!r}; dataset names must be unique"
            )
        datasets[name] = LoadedDataset(gallery=gallery, queries=queries)
    return datasets

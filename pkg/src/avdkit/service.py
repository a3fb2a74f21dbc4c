"""Local HTTP service: the annotation API used by the browser UI plus
read-only analytics endpoints serving the exported artifacts."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from fastapi import FastAPI, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .annostore import (
    AnnotationRecord,
    AnnotationStore,
    InvalidTags,
    TokenMismatch,
    UnknownReport,
    tokenize,
)
from .analytics import read_contingency_csv
from .ingest import read_corpus
from .labels import LengthMismatch


class AnnotationBody(BaseModel):
    report_id: str
    worker_id: str
    tokens: list[str]
    tags: list[str]


def store_from_corpus(
    corpus_path: str | Path,
    log_path: str | Path,
    workers: Sequence[str] = (),
    redundancy: int = 3,
) -> tuple[AnnotationStore, dict[str, str]]:
    reports = read_corpus(corpus_path)
    tokens = {r.id: tokenize(r.description) for r in reports}
    descriptions = {r.id: r.description for r in reports}
    store = AnnotationStore(log_path, tokens, workers=workers, redundancy=redundancy)
    return store, descriptions


def _validation_error(loc: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=422,
        content={"detail": [{"loc": ["body", loc], "msg": message}]},
    )


def create_app(
    store: AnnotationStore,
    descriptions: Optional[dict[str, str]] = None,
    analytics_dir: Optional[str | Path] = None,
    quality_path: Optional[str | Path] = None,
    cors_origins: Sequence[str] = ("*",),
) -> FastAPI:
    app = FastAPI(title="avdkit annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    descriptions = descriptions or {}
    analytics = Path(analytics_dir) if analytics_dir else None

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/tasks")
    def tasks(worker: str = Query(...)) -> dict:
        store.register_worker(worker)  # workers self-identify; no signup step
        pending = store.pending_tasks(worker)
        return {
            "worker_id": worker,
            "tasks": [
                {
                    "report_id": t.report_id,
                    "tokens": list(t.tokens),
                    "assigned_workers": sorted(t.assigned_workers),
                    "required_redundancy": t.required_redundancy,
                }
                for t in pending
            ],
        }

    @app.get("/reports/{report_id}")
    def report(report_id: str) -> Response:
        if report_id not in store.reports:
            return JSONResponse(status_code=404, content={"detail": "unknown report"})
        return JSONResponse(
            {
                "report_id": report_id,
                "tokens": list(store.reports[report_id]),
                "description": descriptions.get(report_id, ""),
            }
        )

    @app.post("/annotations", status_code=201)
    def submit(body: AnnotationBody) -> Response:
        record = AnnotationRecord(
            report_id=body.report_id,
            worker_id=body.worker_id,
            tokens=tuple(body.tokens),
            tags=tuple(body.tags),
        )
        try:
            revision = store.submit(record)
        except UnknownReport as exc:
            return _validation_error("report_id", str(exc))
        except (LengthMismatch, InvalidTags) as exc:
            return _validation_error("tags", str(exc))
        except TokenMismatch as exc:
            return _validation_error("tokens", str(exc))
        return JSONResponse(status_code=201, content={"revision": revision})

    @app.get("/annotations")
    def annotations(report: str = Query(...)) -> Response:
        try:
            records = store.latest_for_report(report)
        except UnknownReport:
            return JSONResponse(status_code=404, content={"detail": "unknown report"})
        return JSONResponse({"report_id": report, "annotations": [r.to_json_dict() for r in records]})

    @app.get("/quality")
    def quality() -> Response:
        path = Path(quality_path) if quality_path else None
        if path is None or not path.exists():
            return JSONResponse(status_code=404, content={"detail": "no aggregation results yet"})
        return JSONResponse(json.loads(path.read_text(encoding="utf-8")))

    def _analytics_json(filename: str) -> Response:
        if analytics is None:
            return JSONResponse(status_code=404, content={"detail": "analytics not configured"})
        path = analytics / filename
        if not path.exists():
            return JSONResponse(status_code=404, content={"detail": f"{filename} not generated"})
        return JSONResponse(json.loads(path.read_text(encoding="utf-8")))

    @app.get("/analytics/contingency")
    def contingency() -> Response:
        if analytics is None:
            return JSONResponse(status_code=404, content={"detail": "analytics not configured"})
        payload = {}
        for name in ("main", "sub"):
            path = analytics / f"contingency_{name}.csv"
            if not path.exists():
                return JSONResponse(status_code=404, content={"detail": f"{path.name} not generated"})
            table = read_contingency_csv(path)
            payload[name] = {
                "row_labels": table.row_labels,
                "col_labels": table.col_labels,
                "counts": table.counts,
                "n": table.n,
            }
        return JSONResponse(payload)

    @app.get("/analytics/chi-square")
    def chi_square_export() -> Response:
        return _analytics_json("chi_square.json")

    @app.get("/analytics/wordcloud/{category}")
    def wordcloud(category: int) -> Response:
        if not 0 <= category <= 8:
            return JSONResponse(status_code=404, content={"detail": "category out of range"})
        return _analytics_json(f"wordcloud_{category}.json")

    @app.get("/analytics/timeseries")
    def timeseries() -> Response:
        return _analytics_json("timeseries.json")

    @app.get("/analytics/sankey")
    def sankey() -> Response:
        return _analytics_json("sankey.json")

    return app

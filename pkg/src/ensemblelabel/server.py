"""HTTP API over the review store, serving the adjudication console.

All responses are JSON except the CSV export; errors use {error, detail}
with conventional status codes (404 unknown case, 409 adjudication conflict,
422 invalid label). Writes serialize through the store's single-writer lock,
so concurrent consoles get last-write-rejected semantics instead of silent
overwrites.
"""

from __future__ import annotations

import io
import csv
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .pipeline import read_final_table
from .review import (AdjudicationConflictError, EXPORT_FIELDS,
                     LabelValidationError, ReviewStore, UnknownCaseError)


class AdjudicationBody(BaseModel):
    label: str
    reviewer: str


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": error, "detail": detail})


def create_app(
    store: ReviewStore,
    *,
    machine_table_path: str | Path | None = None,
    token: str | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="review-service")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if token and request.url.path.startswith("/api/"):
            if request.headers.get("x-review-token") != token:
                return _error(401, "unauthorized", "missing or wrong X-Review-Token header")
        return await call_next(request)

    @app.get("/api/queue")
    def queue(status: str | None = None, machine_outcome: str | None = None,
              page: int = 1, page_size: int = 50):
        if page < 1 or page_size < 1:
            return _error(422, "validation", "page and page_size must be >= 1")
        items, total = store.list_items(
            status=status, machine_outcome=machine_outcome, page=page, page_size=page_size
        )
        return {
            "items": [i.to_dict() for i in items],
            "total": total,
            "page": page,
            "page_size": page_size,
        }

    @app.get("/api/case/{case_id}")
    def case(case_id: str):
        try:
            return store.get(case_id).to_dict()
        except UnknownCaseError:
            return _error(404, "not_found", f"no review item for case {case_id!r}")

    @app.post("/api/case/{case_id}/adjudicate")
    def adjudicate(case_id: str, body: AdjudicationBody):
        try:
            return store.adjudicate(case_id, body.label, body.reviewer).to_dict()
        except UnknownCaseError:
            return _error(404, "not_found", f"no review item for case {case_id!r}")
        except AdjudicationConflictError as exc:
            return _error(409, "conflict", str(exc))
        except LabelValidationError as exc:
            return _error(422, "validation", str(exc))

    @app.post("/api/case/{case_id}/reopen")
    def reopen(case_id: str):
        try:
            return store.reopen(case_id).to_dict()
        except UnknownCaseError:
            return _error(404, "not_found", f"no review item for case {case_id!r}")
        except AdjudicationConflictError as exc:
            return _error(409, "conflict", str(exc))

    @app.get("/api/stats")
    def stats():
        payload = store.stats()
        payload["valid_labels"] = list(store.schema.valid_set)
        payload["review_label"] = store.schema.review_label
        return payload

    @app.get("/api/export")
    def export():
        if machine_table_path is None or not Path(machine_table_path).exists():
            return _error(404, "not_found", "no machine final table available to export")
        rows = store.export_final(read_final_table(machine_table_path))
        store.write_snapshot()
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=EXPORT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
        return PlainTextResponse(buffer.getvalue(), media_type="text/csv")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app

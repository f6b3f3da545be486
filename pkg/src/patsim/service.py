"""Read-only HTTP search service over a built index and store.

Endpoints: GET /healthz, POST /v1/search, GET /v1/documents/{id}. Search
responses always carry the index checksum so clients can pin results to an
exact index build.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import Document, document_to_record
from .embed import EmbeddingStore
from .index import CosineKNNIndex, SearchFilter, SearchIndexError


class FilterBody(BaseModel):
    year_min: int | None = None
    year_max: int | None = None
    kind: str | None = None


class SearchBody(BaseModel):
    query_id: str | None = None
    vector: list[float] | None = None
    k: int = Field(default=10)
    filter: FilterBody | None = None
    exclude: list[str] | None = None


def create_app(
    index: CosineKNNIndex,
    store: EmbeddingStore,
    documents: Mapping[str, Document] | None = None,
) -> FastAPI:
    app = FastAPI(title="patsim search service", version="1")
    documents = documents or {}
    checksum = index.checksum_hex()

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/search")
    def search(body: SearchBody):
        if (body.query_id is None) == (body.vector is None):
            return JSONResponse(
                status_code=400,
                content={"error": "provide exactly one of query_id or vector"},
            )
        if body.query_id is not None:
            if body.query_id not in store:
                return JSONResponse(
                    status_code=404,
                    content={"error": f"no embedding stored for id {body.query_id!r}"},
                )
            query = store.get(body.query_id)
        else:
            query = np.asarray(body.vector, dtype=np.float32)
        try:
            search_filter = None
            if body.filter is not None:
                search_filter = SearchFilter(
                    year_min=body.filter.year_min,
                    year_max=body.filter.year_max,
                    kind=body.filter.kind,
                )
            results = index.search(
                query, body.k,
                search_filter=search_filter,
                exclude=set(body.exclude) if body.exclude else None,
            )
        except SearchIndexError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return {
            "results": [{"doc_id": n.doc_id, "score": n.score} for n in results],
            "index_checksum": checksum,
        }

    @app.get("/v1/documents/{doc_id}")
    def get_document(doc_id: str):
        doc = documents.get(doc_id)
        if doc is None:
            return JSONResponse(status_code=404, content={"error": f"no document {doc_id!r}"})
        return document_to_record(doc)

    return app

"""HTTP JSON service exposing retrieval and zero-shot scoring.

The service holds one trained model and one corpus, both immutable for
its lifetime; every endpoint is a pure read. Responses carry spectra as
320-point previews (max over each 10-bin block) to keep payloads small
while preserving peak visibility for charts.

Malformed requests return status 400 with {"error": ...}; unknown
recording ids return 404 in the same shape. Cross-origin requests are
allowed so a browser console can talk to a locally served model.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .corpus import CorpusDatabase, timestamp_to_iso
from .embeddings import EmbeddingTable
from .inference import DEFAULT_MODE, retrieve, zero_shot
from .model import TlsModel

PREVIEW_BINS = 320


def spectrum_preview(spectrum: np.ndarray, bins: int = PREVIEW_BINS) -> list[float]:
    """Decimate a spectrum to `bins` points, max per block."""
    block = len(spectrum) // bins
    return np.asarray(spectrum, dtype=float).reshape(bins, block).max(axis=1).tolist()


@dataclass
class ServiceState:
    """Immutable model/corpus plus bookkeeping shared across requests."""

    model: TlsModel
    db: CorpusDatabase
    table: EmbeddingTable
    start_time: float = field(default_factory=time.time)
    request_counts: dict[str, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count(self, path: str) -> None:
        with self._lock:
            self.request_counts[path] = self.request_counts.get(path, 0) + 1


ModeName = Literal["train", "text_only", "none"]


class RetrieveRequest(BaseModel):
    query: str = Field(min_length=1)
    k: int = Field(ge=1)
    mode: ModeName = DEFAULT_MODE


class ResultCard(BaseModel):
    recording_id: str
    score: float
    annotation: str | None
    truth_class: str | None
    spectrum_preview: list[float]


class RetrieveResponse(BaseModel):
    results: list[ResultCard]


class ZeroShotRequest(BaseModel):
    queries: list[str] = Field(min_length=1)
    recording_ids: list[str] = Field(min_length=1)
    mode: ModeName = DEFAULT_MODE


class ZeroShotResponse(BaseModel):
    scores: list[list[float]]
    argmax: list[int]


class RecordingInfo(BaseModel):
    recording_id: str
    asset_id: str
    subasset_id: str
    timestamp: str
    truth_class: str | None


class RecordingsResponse(BaseModel):
    total: int
    offset: int
    recordings: list[RecordingInfo]


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="tlsfd service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def on_bad_request(request, exc):  # noqa: ANN001
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=400,
            content={"error": f"{loc}: {first.get('msg', 'invalid request')}"},
        )

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request, exc):  # noqa: ANN001
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.middleware("http")
    async def count_requests(request, call_next):  # noqa: ANN001
        state.count(request.url.path)
        return await call_next(request)

    @app.get("/health")
    async def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/retrieve", response_model=RetrieveResponse)
    async def post_retrieve(req: RetrieveRequest) -> RetrieveResponse:
        by_id = state.db.recording_by_id()
        hits = retrieve(state.model, state.table, state.db, req.query, req.k, req.mode)
        cards = [
            ResultCard(
                recording_id=hit.recording_id,
                score=hit.score,
                annotation=hit.annotation_text,
                truth_class=by_id[hit.recording_id].truth_class,
                spectrum_preview=spectrum_preview(by_id[hit.recording_id].spectrum),
            )
            for hit in hits
        ]
        return RetrieveResponse(results=cards)

    @app.post("/zeroshot", response_model=ZeroShotResponse)
    async def post_zeroshot(req: ZeroShotRequest) -> ZeroShotResponse:
        by_id = state.db.recording_by_id()
        recordings = []
        for rid in req.recording_ids:
            if rid not in by_id:
                raise HTTPException(status_code=404, detail=f"unknown recording_id: {rid}")
            recordings.append(by_id[rid])
        matrix = zero_shot(state.model, state.table, req.queries, recordings, req.mode)
        return ZeroShotResponse(
            scores=[[float(s) for s in row] for row in matrix.scores],
            argmax=matrix.best_query_index,
        )

    @app.get("/recordings", response_model=RecordingsResponse)
    async def list_recordings(
        limit: int = Query(50, ge=1, le=1000), offset: int = Query(0, ge=0)
    ) -> RecordingsResponse:
        window = state.db.recordings[offset : offset + limit]
        return RecordingsResponse(
            total=len(state.db.recordings),
            offset=offset,
            recordings=[
                RecordingInfo(
                    recording_id=r.recording_id,
                    asset_id=r.asset_id,
                    subasset_id=r.subasset_id,
                    timestamp=timestamp_to_iso(r.timestamp),
                    truth_class=r.truth_class,
                )
                for r in window
            ],
        )

    return app

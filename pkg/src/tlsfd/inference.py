"""Zero-shot scoring and retrieval against a trained joint embedding.

Free-text queries are embedded, projected through the text head, and
compared against projected spectra by dot product. The normalization
mode controls which side is unit-normalized before comparison:

  "train":     both sides, matching the training geometry
  "text_only": text side only (the default; spectrum magnitude then
               carries severity information into the score)
  "none":      raw projections on both sides
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CorpusDatabase, DEFAULT_WINDOW_DAYS, Recording
from .embeddings import EmbeddingTable, embed_annotation
from .model import TlsModel
from .nn import head_forward, l2_normalize_rows

NORMALIZATION_MODES = ("train", "text_only", "none")
DEFAULT_MODE = "text_only"


def _check_mode(mode: str) -> None:
    if mode not in NORMALIZATION_MODES:
        raise ValueError(
            f"unknown normalization mode {mode!r}, expected one of {NORMALIZATION_MODES}"
        )


def project_text(model: TlsModel, vectors: np.ndarray, mode: str = DEFAULT_MODE) -> np.ndarray:
    """Project text embeddings (rows) into the joint space."""
    _check_mode(mode)
    z, _ = head_forward(model.text_head, np.atleast_2d(np.asarray(vectors, dtype=float)))
    if mode in ("train", "text_only"):
        z, _ = l2_normalize_rows(z)
    return z


def project_spectrum(
    model: TlsModel, spectra: np.ndarray, mode: str = DEFAULT_MODE
) -> np.ndarray:
    """Project spectra (rows of 3200 bins) into the joint space."""
    _check_mode(mode)
    z, _ = head_forward(model.spectrum_head, np.atleast_2d(np.asarray(spectra, dtype=float)))
    if mode == "train":
        z, _ = l2_normalize_rows(z)
    return z


def embed_queries(table: EmbeddingTable, queries: list[str]) -> np.ndarray:
    """Stack query embeddings; unseen text falls back to hashed trigrams."""
    if not queries:
        raise ValueError("queries must be non-empty")
    return np.stack([embed_annotation(table, q) for q in queries])


@dataclass
class ScoreMatrix:
    """Query-by-recording score grid with per-recording best query."""

    queries: list[str]
    recording_ids: list[str]
    scores: np.ndarray  # (n_queries, n_recordings)
    best_query_index: list[int]  # argmax over queries, ties to the lowest index


def zero_shot(
    model: TlsModel,
    table: EmbeddingTable,
    queries: list[str],
    recordings: list[Recording],
    mode: str = DEFAULT_MODE,
) -> ScoreMatrix:
    """Score every query against every recording's spectrum."""
    if not recordings:
        raise ValueError("recordings must be non-empty")
    q_z = project_text(model, embed_queries(table, queries), mode)
    s_z = project_spectrum(model, np.stack([r.spectrum for r in recordings]), mode)
    scores = q_z @ s_z.T
    best = [int(i) for i in np.argmax(scores, axis=0)]
    return ScoreMatrix(
        queries=list(queries),
        recording_ids=[r.recording_id for r in recordings],
        scores=scores,
        best_query_index=best,
    )


@dataclass
class RetrievalHit:
    recording_id: str
    score: float
    asset_id: str
    subasset_id: str
    timestamp: int
    annotation_text: str | None


def _nearest_annotation(
    db: CorpusDatabase, recording: Recording, window_days: int
) -> str | None:
    """Text of the closest same-asset annotation within the window, if any."""
    window_s = window_days * 86_400
    best: tuple[int, int, str] | None = None
    text = None
    for ann in db.annotations:
        if ann.asset_id != recording.asset_id:
            continue
        gap = abs(recording.timestamp - ann.date)
        if gap > window_s:
            continue
        key = (gap, ann.date, ann.annotation_id)
        if best is None or key < best:
            best = key
            text = ann.text
    return text


def retrieve(
    model: TlsModel,
    table: EmbeddingTable,
    db: CorpusDatabase,
    query: str,
    k: int,
    mode: str = DEFAULT_MODE,
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> list[RetrievalHit]:
    """Top-k recordings for a query, best score first, ids break ties."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not db.recordings:
        raise ValueError("corpus has no recordings")
    matrix = zero_shot(model, table, [query], db.recordings, mode)
    scored = sorted(
        zip(matrix.scores[0], db.recordings),
        key=lambda pair: (-pair[0], pair[1].recording_id),
    )
    hits = []
    for score, rec in scored[:k]:
        hits.append(
            RetrievalHit(
                recording_id=rec.recording_id,
                score=float(score),
                asset_id=rec.asset_id,
                subasset_id=rec.subasset_id,
                timestamp=rec.timestamp,
                annotation_text=_nearest_annotation(db, rec, window_days),
            )
        )
    return hits

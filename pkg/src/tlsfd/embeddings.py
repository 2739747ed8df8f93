"""Annotation text embeddings: precomputed tables plus a hashing fallback.

The sentence encoder that produced annotation embeddings is treated as
frozen input data: a table file maps annotation text to a 768-d vector.
For texts missing from the table (or when no table is supplied at all)
a deterministic character-trigram hashing embedder stands in, so the
whole pipeline runs without any external model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMBEDDING_DIM = 768
EMBEDDING_FORMAT = "tlsfd-embeddings"
EMBEDDING_VERSION = 1


class EmbeddingError(ValueError):
    """Text cannot be embedded or an embedding file is invalid."""


def normalize_text(text: str) -> str:
    """Trim, collapse runs of whitespace to single spaces, lower-case."""
    return " ".join(text.split()).lower()


def _trigram_hashes(trigram: str) -> tuple[int, int]:
    data = trigram.encode("utf-8")
    bucket = int.from_bytes(
        hashlib.blake2b(data, digest_size=8, person=b"bucket").digest(), "big"
    )
    sign = hashlib.blake2b(data, digest_size=1, person=b"sign").digest()[0]
    return bucket % EMBEDDING_DIM, 1 if sign % 2 == 0 else -1


def hash_embed(text: str) -> np.ndarray:
    """Deterministic 768-d embedding from signed character-trigram hashing.

    Each trigram of the normalized, space-padded text adds +-1 to one of
    768 buckets; the result is L2-normalized. Texts sharing trigrams get
    correlated vectors, which is all the downstream projection heads need.
    """
    normalized = normalize_text(text)
    if not normalized:
        raise EmbeddingError("cannot embed empty or whitespace-only text")
    padded = f" {normalized} "
    vector = np.zeros(EMBEDDING_DIM)
    for i in range(len(padded) - 2):
        bucket, sign = _trigram_hashes(padded[i : i + 3])
        vector[bucket] += sign
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:  # complete cancellation; vanishingly rare but possible
        bucket, _ = _trigram_hashes(normalized)
        vector[bucket] = 1.0
        norm = 1.0
    return vector / norm


@dataclass
class EmbeddingTable:
    """Map from normalized annotation text to a 768-d vector."""

    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    source: str = "fallback"  # "loaded" or "fallback"
    fallback_misses: int = 0


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Load a line-delimited embedding file, keyed by normalized text."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    with path.open("r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise EmbeddingError(f"line 1: invalid JSON header: {exc}") from exc
        if header.get("format") != EMBEDDING_FORMAT:
            raise EmbeddingError(
                f"line 1: expected format {EMBEDDING_FORMAT!r}, "
                f"got {header.get('format')!r}"
            )
        if header.get("dim") != EMBEDDING_DIM:
            raise EmbeddingError(
                f"line 1: expected dim {EMBEDDING_DIM}, got {header.get('dim')!r}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                text = row["text"]
                vector = np.asarray(row["vector"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EmbeddingError(f"line {lineno}: malformed row: {exc}") from exc
            if vector.shape != (EMBEDDING_DIM,):
                raise EmbeddingError(
                    f"line {lineno}: vector has {vector.size} values, "
                    f"expected {EMBEDDING_DIM}"
                )
            if not np.all(np.isfinite(vector)):
                raise EmbeddingError(f"line {lineno}: vector has non-finite values")
            key = normalize_text(text)
            if not key:
                raise EmbeddingError(f"line {lineno}: empty text")
            existing = vectors.get(key)
            if existing is not None and not np.array_equal(existing, vector):
                raise EmbeddingError(
                    f"line {lineno}: duplicate text {key!r} with differing vector"
                )
            vectors[key] = vector
    return EmbeddingTable(vectors=vectors, source="loaded")


def save_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "format": EMBEDDING_FORMAT,
                    "version": EMBEDDING_VERSION,
                    "dim": EMBEDDING_DIM,
                }
            )
        )
        fh.write("\n")
        for text, vector in table.vectors.items():
            fh.write(json.dumps({"text": text, "vector": vector.tolist()}))
            fh.write("\n")


def embed_annotation(table: EmbeddingTable, text: str) -> np.ndarray:
    """Table lookup by normalized text, falling back to hash_embed on a miss.

    Loaded vectors are returned verbatim (no renormalization); fallback
    vectors are unit norm. Misses are counted on the table.
    """
    key = normalize_text(text)
    if not key:
        raise EmbeddingError("cannot embed empty or whitespace-only text")
    stored = table.vectors.get(key)
    if stored is not None:
        return stored
    table.fallback_misses += 1
    return hash_embed(key)

"""Text normalization, hashing fallback embedder and embedding tables."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsfd.embeddings import (
    EMBEDDING_DIM,
    EmbeddingError,
    EmbeddingTable,
    embed_annotation,
    hash_embed,
    load_embedding_table,
    normalize_text,
    save_embedding_table,
)


class TestNormalizeText:
    def test_trims_and_collapses(self):
        assert normalize_text("  Outer   race\ttone ") == "outer race tone"

    def test_lowercases(self):
        assert normalize_text("Replace Sensor") == "replace sensor"

    def test_empty_variants(self):
        assert normalize_text("") == ""
        assert normalize_text(" \t\n ") == ""

    @settings(max_examples=100, deadline=None)
    @given(st.text())
    def test_idempotent(self, text):
        once = normalize_text(text)
        assert normalize_text(once) == once


class TestHashEmbed:
    def test_shape_and_unit_norm(self):
        vec = hash_embed("bearing outer race tone")
        assert vec.shape == (EMBEDDING_DIM,)
        np.testing.assert_allclose(np.linalg.norm(vec), 1.0, atol=1e-12)

    def test_deterministic(self):
        a = hash_embed("loose mounting bolts")
        b = hash_embed("loose mounting bolts")
        assert np.array_equal(a, b)

    def test_case_and_whitespace_invariant(self):
        a = hash_embed("Replace  Sensor")
        b = hash_embed("replace sensor")
        assert np.array_equal(a, b)

    def test_distinct_texts_differ(self):
        a = hash_embed("cable intermittent")
        b = hash_embed("bearing tone rising")
        assert not np.array_equal(a, b)

    def test_shared_trigrams_correlate(self):
        """Near-identical phrases should land closer than unrelated ones."""
        base = hash_embed("outer race fault level low")
        near = hash_embed("outer race fault level high")
        far = hash_embed("dc offset on channel two")
        assert float(base @ near) > float(base @ far)

    def test_empty_text_rejected(self):
        with pytest.raises(EmbeddingError, match="empty"):
            hash_embed("   ")

    @settings(max_examples=100, deadline=None)
    @given(st.text(min_size=1).filter(lambda t: t.strip()))
    def test_always_unit_norm(self, text):
        vec = hash_embed(text)
        np.testing.assert_allclose(np.linalg.norm(vec), 1.0, atol=1e-12)


class TestEmbeddingTable:
    def _table(self) -> EmbeddingTable:
        rng = np.random.default_rng(2)
        return EmbeddingTable(
            vectors={
                "outer race tone": rng.normal(size=EMBEDDING_DIM),
                "replace sensor": rng.normal(size=EMBEDDING_DIM),
            },
            source="loaded",
        )

    def test_round_trip(self, tmp_path):
        table = self._table()
        path = tmp_path / "emb.jsonl"
        save_embedding_table(table, path)
        loaded = load_embedding_table(path)
        assert loaded.source == "loaded"
        assert set(loaded.vectors) == set(table.vectors)
        for key in table.vectors:
            assert np.array_equal(loaded.vectors[key], table.vectors[key])

    def test_lookup_returns_stored_vector(self):
        table = self._table()
        got = embed_annotation(table, "  Outer   race TONE ")
        assert np.array_equal(got, table.vectors["outer race tone"])
        assert table.fallback_misses == 0

    def test_miss_falls_back_and_counts(self):
        table = self._table()
        got = embed_annotation(table, "never seen before")
        assert np.array_equal(got, hash_embed("never seen before"))
        assert table.fallback_misses == 1
        embed_annotation(table, "another unseen one")
        assert table.fallback_misses == 2

    def test_empty_text_rejected(self):
        with pytest.raises(EmbeddingError, match="empty"):
            embed_annotation(self._table(), "")

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"format":"other","dim":768}\n')
        with pytest.raises(EmbeddingError, match="line 1"):
            load_embedding_table(path)

    def test_dim_checked(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"format":"tlsfd-embeddings","version":1,"dim":512}\n')
        with pytest.raises(EmbeddingError, match="dim"):
            load_embedding_table(path)

    def test_wrong_vector_length(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"format":"tlsfd-embeddings","version":1,"dim":768}\n'
            + json.dumps({"text": "x", "vector": [0.0] * 767})
            + "\n"
        )
        with pytest.raises(EmbeddingError, match="line 2.*767"):
            load_embedding_table(path)

    def test_duplicate_text_conflicting_vector(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rows = [
            json.dumps({"text": "Same Text", "vector": [1.0] * EMBEDDING_DIM}),
            json.dumps({"text": "same  text", "vector": [2.0] * EMBEDDING_DIM}),
        ]
        path.write_text(
            '{"format":"tlsfd-embeddings","version":1,"dim":768}\n'
            + "\n".join(rows)
            + "\n"
        )
        with pytest.raises(EmbeddingError, match="duplicate"):
            load_embedding_table(path)

    def test_duplicate_text_same_vector_ok(self, tmp_path):
        path = tmp_path / "ok.jsonl"
        row = json.dumps({"text": "same text", "vector": [1.0] * EMBEDDING_DIM})
        path.write_text(
            '{"format":"tlsfd-embeddings","version":1,"dim":768}\n'
            + row
            + "\n"
            + row
            + "\n"
        )
        loaded = load_embedding_table(path)
        assert len(loaded.vectors) == 1

    def test_non_finite_vector_rejected(self, tmp_path):
        vec = [0.0] * EMBEDDING_DIM
        vec[5] = float("nan")
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"format":"tlsfd-embeddings","version":1,"dim":768}\n'
            + json.dumps({"text": "x", "vector": vec})
            + "\n"
        )
        with pytest.raises(EmbeddingError, match="non-finite"):
            load_embedding_table(path)

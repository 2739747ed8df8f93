"""Shared fixtures: corpora and trained models reused across test modules."""

from __future__ import annotations

import pytest

from tlsfd.corpus import propagate_annotations, split_by_asset
from tlsfd.embeddings import EmbeddingTable
from tlsfd.synth import GeneratorConfig, default_config, gen_corpus
from tlsfd.training import TrainConfig, train


@pytest.fixture(scope="session")
def fallback_table():
    return EmbeddingTable(vectors={}, source="fallback")


@pytest.fixture(scope="session")
def small_corpus():
    cfg = GeneratorConfig(n_assets=12, recordings_per_annotation=10)
    return gen_corpus(cfg)


@pytest.fixture(scope="session")
def small_model(small_corpus, fallback_table):
    model, _ = train(small_corpus, fallback_table, TrainConfig(epochs=2, seed=0))
    return model


@pytest.fixture(scope="session")
def default_corpus():
    return gen_corpus(default_config())


@pytest.fixture(scope="session")
def trained_default(default_corpus, fallback_table):
    """Model and history from the stock three-epoch run, seed 0."""
    return train(default_corpus, fallback_table, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def default_split(default_corpus):
    pairs = propagate_annotations(default_corpus)
    return split_by_asset(pairs, default_corpus, 0.2, 0)

"""Training loop, gradient checking harness, and held-out evaluation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tlsfd.contrastive import LossBreakdown, contrastive_loss
from tlsfd.corpus import PairDataset, propagate_annotations, split_by_asset
from tlsfd.embeddings import embed_annotation
from tlsfd.model import create_model
from tlsfd.nn import flatten_params, grad_check, head_forward, l2_normalize_rows
from tlsfd.synth import CorruptionRates, FaultClass, GeneratorConfig, gen_corpus
from tlsfd.training import (
    TrainConfig,
    batch_mean_loss,
    evaluate,
    gradient_check_problem,
    joint_loss_and_grad,
    pair_matrices,
    train,
)

_TWO_CLASS_CFG = GeneratorConfig(
    n_assets=10,
    classes_distribution={FaultClass.HEALTHY: 0.5, FaultClass.BPFO: 0.5},
    recordings_per_annotation=12,
    seed=5,
)


def _model_params(model) -> np.ndarray:
    return np.concatenate(
        [flatten_params(model.text_head), flatten_params(model.spectrum_head)]
    )


class TestPairMatrices:
    def test_rows_in_pair_order(self, small_corpus, fallback_table):
        pairs = propagate_annotations(small_corpus).pairs[:5]
        texts, spectra = pair_matrices(small_corpus, fallback_table, pairs)
        assert texts.shape == (5, 768)
        assert spectra.shape == (5, 3200)
        ann_text = {a.annotation_id: a.text for a in small_corpus.annotations}
        by_id = small_corpus.recording_by_id()
        for row, (rec_id, ann_id) in enumerate(pairs):
            np.testing.assert_array_equal(
                texts[row], embed_annotation(fallback_table, ann_text[ann_id])
            )
            np.testing.assert_array_equal(spectra[row], by_id[rec_id].spectrum)

    def test_empty_pairs(self, small_corpus, fallback_table):
        texts, spectra = pair_matrices(small_corpus, fallback_table, [])
        assert texts.shape == (0, 768)
        assert spectra.shape == (0, 3200)


class TestJointLoss:
    def test_matches_manual_pipeline(self, small_corpus, fallback_table):
        """Infer-mode loss equals head forward + normalize + loss by hand."""
        pairs = propagate_annotations(small_corpus).pairs[:6]
        texts, spectra = pair_matrices(small_corpus, fallback_table, pairs)
        model = create_model(seed=2)
        breakdown, _, _ = joint_loss_and_grad(model, texts, spectra)

        z_text, _ = head_forward(model.text_head, texts)
        z_spec, _ = head_forward(model.spectrum_head, spectra)
        u_text, _ = l2_normalize_rows(z_text)
        u_spec, _ = l2_normalize_rows(z_spec)
        expected = contrastive_loss(u_text, u_spec, model.temperature)
        np.testing.assert_allclose(breakdown.total, expected.total, atol=1e-12)

    def test_gradient_check_passes(self, small_corpus, fallback_table):
        """Full pipeline (dropout masks and targets frozen) vs differences."""
        chosen: dict[str, tuple[str, str]] = {}
        for pair in propagate_annotations(small_corpus).pairs:
            chosen.setdefault(pair[1], pair)  # one pair per annotation
            if len(chosen) == 4:
                break
        texts, spectra = pair_matrices(
            small_corpus, fallback_table, list(chosen.values())
        )
        model = create_model(seed=11)
        loss_and_grad, loss_only, flat = gradient_check_problem(
            model, texts, spectra, mask_seed=0
        )
        worst = grad_check(loss_and_grad, flat, h=1e-4, seed=0, loss_fn=loss_only)
        assert worst < 1e-4


class TestTrain:
    def test_history_length(self, small_corpus, fallback_table):
        _, history = train(small_corpus, fallback_table, TrainConfig(epochs=2, seed=0))
        assert len(history.epochs) == 2
        assert [e.epoch for e in history.epochs] == [0, 1]
        assert all(math.isfinite(e.train_loss) for e in history.epochs)
        assert all(math.isfinite(e.val_loss) for e in history.epochs)

    def test_deterministic_given_seed(self, small_corpus, fallback_table):
        cfg = TrainConfig(epochs=2, seed=9)
        model_a, hist_a = train(small_corpus, fallback_table, cfg)
        model_b, hist_b = train(small_corpus, fallback_table, cfg)
        np.testing.assert_array_equal(_model_params(model_a), _model_params(model_b))
        assert hist_a.train_losses == hist_b.train_losses
        assert hist_a.val_losses == hist_b.val_losses

    def test_seed_changes_model(self, small_corpus, fallback_table):
        model_a, _ = train(small_corpus, fallback_table, TrainConfig(epochs=1, seed=0))
        model_b, _ = train(small_corpus, fallback_table, TrainConfig(epochs=1, seed=1))
        assert not np.array_equal(_model_params(model_a), _model_params(model_b))

    def test_first_epoch_loss_near_log_batch(self, trained_default):
        """Untrained heads produce near-uniform logits: loss close to ln 64."""
        _, history = trained_default
        assert math.log(64) - 1 <= history.epochs[0].train_loss <= math.log(64) + 1

    def test_default_corpus_curves(self, trained_default):
        """Train loss falls every epoch and overfits past validation."""
        _, history = trained_default
        losses = history.train_losses
        assert len(losses) == 3
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < history.val_losses[-1]

    def test_meta_echoes_config(self, small_corpus, fallback_table):
        cfg = TrainConfig(epochs=2, batch_size=32, seed=4)
        model, history = train(small_corpus, fallback_table, cfg)
        assert model.meta["seed"] == 4
        assert model.meta["epochs"] == 2
        assert model.meta["batch_size"] == 32
        assert model.meta["n_train_pairs"] == history.n_train_pairs
        assert model.meta["n_val_pairs"] == history.n_val_pairs

    def test_config_validation(self, small_corpus, fallback_table):
        with pytest.raises(ValueError, match="epochs"):
            train(small_corpus, fallback_table, TrainConfig(epochs=0))
        with pytest.raises(ValueError, match="batch_size"):
            train(small_corpus, fallback_table, TrainConfig(batch_size=1))

    def test_non_finite_loss_aborts_with_location(
        self, small_corpus, fallback_table, monkeypatch
    ):
        def poisoned(model, texts, spectra, **kwargs):
            return LossBreakdown(math.nan, math.nan), {}, {}

        monkeypatch.setattr("tlsfd.training.joint_loss_and_grad", poisoned)
        with pytest.raises(FloatingPointError, match="epoch 0"):
            train(small_corpus, fallback_table, TrainConfig(epochs=1, seed=0))


class TestBatchMeanLoss:
    def _matrices(self, small_corpus, fallback_table, n):
        pairs = propagate_annotations(small_corpus).pairs[:n]
        return pair_matrices(small_corpus, fallback_table, pairs)

    def test_single_pair_batches_skipped(self, small_corpus, fallback_table):
        """3 pairs at batch size 2: the trailing singleton must not count."""
        texts, spectra = self._matrices(small_corpus, fallback_table, 3)
        model = create_model(seed=1)
        with_tail = batch_mean_loss(model, texts, spectra, batch_size=2)
        first_only = batch_mean_loss(model, texts[:2], spectra[:2], batch_size=2)
        np.testing.assert_allclose(with_tail, first_only, atol=1e-12)

    def test_all_batches_too_small_gives_nan(self, small_corpus, fallback_table):
        texts, spectra = self._matrices(small_corpus, fallback_table, 1)
        model = create_model(seed=1)
        assert math.isnan(batch_mean_loss(model, texts, spectra, batch_size=2))

    def test_pair_weighted_mean(self, small_corpus, fallback_table):
        """5 pairs at batch 3: mean weighted 3:2, not averaged per batch."""
        texts, spectra = self._matrices(small_corpus, fallback_table, 5)
        model = create_model(seed=1)
        got = batch_mean_loss(model, texts, spectra, batch_size=3)
        first = batch_mean_loss(model, texts[:3], spectra[:3], batch_size=3)
        second = batch_mean_loss(model, texts[3:], spectra[3:], batch_size=3)
        np.testing.assert_allclose(got, (3 * first + 2 * second) / 5, atol=1e-12)

    def test_deterministic(self, small_corpus, fallback_table):
        """Dropout stays off outside training, so the loss is reproducible."""
        texts, spectra = self._matrices(small_corpus, fallback_table, 8)
        model = create_model(seed=1)
        a = batch_mean_loss(model, texts, spectra, batch_size=4)
        b = batch_mean_loss(model, texts, spectra, batch_size=4)
        assert a == b


@pytest.fixture(scope="module")
def two_class_setup(fallback_table):
    db = gen_corpus(_TWO_CLASS_CFG)
    model, _ = train(db, fallback_table, TrainConfig(epochs=6, batch_size=32, seed=0))
    pairs = propagate_annotations(db)
    _, val = split_by_asset(pairs, db, 0.2, 0)
    return db, model, val


class TestEvaluate:
    _QUERIES = {"BPFO low levels": "BPFO", "DC FS": "Healthy"}

    def test_separable_two_class_accuracy(self, two_class_setup, fallback_table):
        """Perfectly separable synthetic classes: the model nails the val set."""
        db, model, val = two_class_setup
        report = evaluate(model, fallback_table, db, val, self._QUERIES)
        assert report.zero_shot_accuracy == 1.0
        assert 0.0 <= report.precision_at_k <= 1.0

    def test_bounds(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        report = evaluate(model, fallback_table, db, val, self._QUERIES)
        assert 0.0 <= report.zero_shot_accuracy <= 1.0
        for value in report.per_query_precision.values():
            assert 0.0 <= value <= 1.0
        for value in report.per_class_accuracy.values():
            assert 0.0 <= value <= 1.0

    def test_parameters_untouched(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        before = _model_params(model).copy()
        evaluate(model, fallback_table, db, val, self._QUERIES)
        np.testing.assert_array_equal(_model_params(model), before)

    def test_duplicate_queries_leave_accuracy_unchanged(
        self, two_class_setup, fallback_table
    ):
        """A class-max over identical query embeddings is idempotent."""
        db, model, val = two_class_setup
        base = evaluate(model, fallback_table, db, val, self._QUERIES)
        doubled = dict(self._QUERIES)
        doubled["BPFO  low  levels"] = "BPFO"  # same text after normalization
        again = evaluate(model, fallback_table, db, val, doubled)
        assert again.zero_shot_accuracy == base.zero_shot_accuracy

    def test_k_clamped_to_corpus(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        report = evaluate(model, fallback_table, db, val, self._QUERIES, k=10**6)
        assert report.k == report.n_recordings

    def test_empty_pairs_rejected(self, two_class_setup, fallback_table):
        db, model, _ = two_class_setup
        with pytest.raises(ValueError, match="no pairs"):
            evaluate(model, fallback_table, db, [], self._QUERIES)

    def test_empty_queries_rejected(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        with pytest.raises(ValueError, match="queries"):
            evaluate(model, fallback_table, db, val, {})

    def test_bad_k_rejected(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        with pytest.raises(ValueError, match="k"):
            evaluate(model, fallback_table, db, val, self._QUERIES, k=0)

    def test_uncovered_class_rejected(self, two_class_setup, fallback_table):
        db, model, _ = two_class_setup
        all_pairs = propagate_annotations(db)  # both classes present here
        with pytest.raises(ValueError, match="BPFO"):
            evaluate(model, fallback_table, db, all_pairs, {"DC FS": "Healthy"})

    def test_missing_truth_class_rejected(self, fallback_table):
        cfg = GeneratorConfig(n_assets=4, recordings_per_annotation=4, seed=2)
        db = gen_corpus(cfg)
        model, _ = train(db, fallback_table, TrainConfig(epochs=1, seed=0))
        pairs = propagate_annotations(db)
        db.recordings[0].truth_class = None
        target = db.recordings[0].recording_id
        usable = [p for p in pairs.pairs if p[0] == target] + pairs.pairs[:3]
        with pytest.raises(ValueError, match="truth class"):
            evaluate(
                model,
                fallback_table,
                db,
                usable,
                {q: c.value for c in FaultClass for q in [c.value]},
            )

    def test_accepts_pair_dataset_or_list(self, two_class_setup, fallback_table):
        db, model, val = two_class_setup
        as_dataset = evaluate(model, fallback_table, db, val, self._QUERIES)
        as_list = evaluate(model, fallback_table, db, list(val.pairs), self._QUERIES)
        assert as_dataset.zero_shot_accuracy == as_list.zero_shot_accuracy
        assert as_dataset.n_pairs == as_list.n_pairs


class TestTrainErrors:
    def test_corpus_without_pairs_rejected(self, fallback_table):
        cfg = GeneratorConfig(
            n_assets=3,
            recordings_per_annotation=2,
            corruption=CorruptionRates(incomplete_rate=1.0),
        )
        db = gen_corpus(cfg)
        with pytest.raises(ValueError, match="fewer than two"):
            train(db, fallback_table, TrainConfig(epochs=1))

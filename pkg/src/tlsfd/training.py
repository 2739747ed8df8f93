"""End-to-end training loop and held-out evaluation.

Training propagates annotations onto recordings, splits pairs by asset,
then runs minibatch Adam on the contrastive objective with dropout
active and both projections unit-normalized. All randomness (head init,
shuffling, dropout) derives from one seed, so two runs with the same
inputs produce identical checkpoints.

Evaluation reports the validation loss, zero-shot classification
accuracy from a query-to-class map, and retrieval precision at k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contrastive import LossBreakdown, contrastive_loss, loss_backward, soft_targets
from .corpus import (
    CorpusDatabase,
    DEFAULT_WINDOW_DAYS,
    PairDataset,
    SPECTRUM_BINS,
    propagate_annotations,
    split_by_asset,
)
from .embeddings import EMBEDDING_DIM, EmbeddingTable, embed_annotation
from .inference import DEFAULT_MODE, zero_shot
from .model import TlsModel, create_model
from .nn import (
    AdamState,
    assign_params,
    flatten_params,
    head_backward,
    head_forward,
    l2_normalize_backward,
    l2_normalize_rows,
    optimizer_step,
)


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-3
    temperature: float = 1.0
    dropout_rate: float = 0.1
    val_fraction: float = 0.2
    window_days: int = DEFAULT_WINDOW_DAYS
    shuffle: bool = True
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    n_train_pairs: int = 0
    n_val_pairs: int = 0

    @property
    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def val_losses(self) -> list[float]:
        return [e.val_loss for e in self.epochs]


def pair_matrices(
    db: CorpusDatabase,
    table: EmbeddingTable,
    pairs: Sequence[tuple[str, str]],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair text embedding and spectrum matrices, in pair order."""
    if not pairs:
        return np.empty((0, EMBEDDING_DIM)), np.empty((0, SPECTRUM_BINS))
    ann_text = {a.annotation_id: a.text for a in db.annotations}
    by_id = db.recording_by_id()
    text_cache: dict[str, np.ndarray] = {}
    rows_t = []
    rows_s = []
    for rec_id, ann_id in pairs:
        if ann_id not in text_cache:
            text_cache[ann_id] = embed_annotation(table, ann_text[ann_id])
        rows_t.append(text_cache[ann_id])
        rows_s.append(by_id[rec_id].spectrum)
    return np.stack(rows_t), np.stack(rows_s)


def joint_loss_and_grad(
    model: TlsModel,
    texts: np.ndarray,
    spectra: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    text_mask: np.ndarray | None = None,
    spectrum_mask: np.ndarray | None = None,
    targets: np.ndarray | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Loss of one batch plus exact parameter gradients for both heads.

    The full chain is differentiated: head forward, row normalization of
    both sides, contrastive loss. With `train` set, dropout masks are
    drawn from `rng` (text head first) unless fixed masks are supplied.
    Soft targets default to the batch's own and are never differentiated
    through; fixed `targets` make the whole function pure in the
    parameters, as finite-difference checks require.
    """
    z_text_raw, cache_t = head_forward(
        model.text_head, texts, train=train, rng=rng, dropout_mask=text_mask
    )
    z_spec_raw, cache_s = head_forward(
        model.spectrum_head, spectra, train=train, rng=rng, dropout_mask=spectrum_mask
    )
    u_text, n_text = l2_normalize_rows(z_text_raw)
    u_spec, n_spec = l2_normalize_rows(z_spec_raw)
    breakdown, d_u_text, d_u_spec = loss_backward(
        u_text, u_spec, model.temperature, targets
    )
    d_z_text = l2_normalize_backward(u_text, n_text, d_u_text)
    d_z_spec = l2_normalize_backward(u_spec, n_spec, d_u_spec)
    grads_text, _ = head_backward(model.text_head, cache_t, d_z_text)
    grads_spec, _ = head_backward(model.spectrum_head, cache_s, d_z_spec)
    return breakdown, grads_text, grads_spec


def gradient_check_problem(
    model: TlsModel,
    texts: np.ndarray,
    spectra: np.ndarray,
    mask_seed: int = 0,
):
    """Pure closures over flattened parameters for finite-difference checks.

    Freezes dropout masks and soft targets at the base point, making the
    train-mode pipeline differentiable in the parameters. Returns
    (loss_and_grad, loss_only, flat_params); the model's parameter
    arrays are used as scratch space by both closures.
    """
    rate = model.text_head.dropout_rate
    mask_rng = np.random.default_rng(mask_seed)
    batch = len(texts)
    masks = {}
    for name, head in (("text", model.text_head), ("spectrum", model.spectrum_head)):
        keep = mask_rng.random((batch, head.out_dim)) >= rate
        masks[name] = keep / (1.0 - rate) if rate > 0 else np.ones((batch, head.out_dim))

    z_text, _ = head_forward(model.text_head, texts, train=True, dropout_mask=masks["text"])
    z_spec, _ = head_forward(
        model.spectrum_head, spectra, train=True, dropout_mask=masks["spectrum"]
    )
    u_text, _ = l2_normalize_rows(z_text)
    u_spec, _ = l2_normalize_rows(z_spec)
    targets = soft_targets(u_text, u_spec, model.temperature)

    n_text = flatten_params(model.text_head).size
    param_names = ("W1", "b1", "W2", "b2", "ln_gain", "ln_bias")

    def _assign(flat: np.ndarray) -> None:
        assign_params(model.text_head, flat[:n_text])
        assign_params(model.spectrum_head, flat[n_text:])

    def loss_and_grad(flat: np.ndarray) -> tuple[float, np.ndarray]:
        _assign(flat)
        breakdown, grads_t, grads_s = joint_loss_and_grad(
            model,
            texts,
            spectra,
            train=True,
            text_mask=masks["text"],
            spectrum_mask=masks["spectrum"],
            targets=targets,
        )
        grad = np.concatenate(
            [grads_t[k].ravel() for k in param_names]
            + [grads_s[k].ravel() for k in param_names]
        )
        return breakdown.total, grad

    def loss_only(flat: np.ndarray) -> float:
        _assign(flat)
        zt, _ = head_forward(model.text_head, texts, train=True, dropout_mask=masks["text"])
        zs, _ = head_forward(
            model.spectrum_head, spectra, train=True, dropout_mask=masks["spectrum"]
        )
        ut, _ = l2_normalize_rows(zt)
        us, _ = l2_normalize_rows(zs)
        return contrastive_loss(ut, us, model.temperature, targets).total

    base = np.concatenate(
        [flatten_params(model.text_head), flatten_params(model.spectrum_head)]
    )
    return loss_and_grad, loss_only, base


def batch_mean_loss(
    model: TlsModel,
    texts: np.ndarray,
    spectra: np.ndarray,
    batch_size: int,
) -> float:
    """Pair-weighted mean loss over in-order batches, dropout off.

    Batches smaller than two pairs carry no contrastive signal and are
    skipped on both sides of the average. Returns NaN if nothing usable.
    """
    total = 0.0
    count = 0
    for start in range(0, len(texts), batch_size):
        bt = texts[start : start + batch_size]
        bs = spectra[start : start + batch_size]
        if len(bt) < 2:
            continue
        z_text, _ = head_forward(model.text_head, bt)
        z_spec, _ = head_forward(model.spectrum_head, bs)
        u_text, _ = l2_normalize_rows(z_text)
        u_spec, _ = l2_normalize_rows(z_spec)
        total += contrastive_loss(u_text, u_spec, model.temperature).total * len(bt)
        count += len(bt)
    return total / count if count else math.nan


def train(
    db: CorpusDatabase,
    table: EmbeddingTable,
    config: TrainConfig | None = None,
) -> tuple[TlsModel, TrainHistory]:
    """Train a fresh model on the corpus; returns the model and loss history."""
    config = config or TrainConfig()
    if config.epochs < 1:
        raise ValueError("epochs must be at least 1")
    if config.batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    pairs = propagate_annotations(db, config.window_days)
    if len(pairs) < 2:
        raise ValueError("corpus yields fewer than two text/spectrum pairs")
    train_set, val_set = split_by_asset(pairs, db, config.val_fraction, config.seed)
    if len(train_set) < 2:
        raise ValueError("training split has fewer than two pairs")
    texts_tr, specs_tr = pair_matrices(db, table, train_set.pairs)
    texts_va, specs_va = pair_matrices(db, table, val_set.pairs)

    root = np.random.SeedSequence(config.seed)
    model = create_model(
        root, dropout_rate=config.dropout_rate, temperature=config.temperature
    )
    shuffle_seq, dropout_seq = root.spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    adam_text = AdamState(lr=config.learning_rate)
    adam_spec = AdamState(lr=config.learning_rate)

    history = TrainHistory(n_train_pairs=len(train_set), n_val_pairs=len(val_set))
    n = len(train_set)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        count = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            breakdown, grads_t, grads_s = joint_loss_and_grad(
                model, texts_tr[idx], specs_tr[idx], train=True, rng=dropout_rng
            )
            if not math.isfinite(breakdown.total):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            optimizer_step(model.text_head.params(), grads_t, adam_text)
            optimizer_step(model.spectrum_head.params(), grads_s, adam_spec)
            total += breakdown.total * len(idx)
            count += len(idx)
        train_loss = total / count
        val_loss = batch_mean_loss(model, texts_va, specs_va, config.batch_size)
        history.epochs.append(
            EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss)
        )
    model.meta = {
        "seed": config.seed,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "temperature": config.temperature,
        "dropout_rate": config.dropout_rate,
        "val_fraction": config.val_fraction,
        "window_days": config.window_days,
        "shuffle": config.shuffle,
        "n_train_pairs": len(train_set),
        "n_val_pairs": len(val_set),
    }
    return model, history


@dataclass
class EvalReport:
    val_loss: float
    zero_shot_accuracy: float
    precision_at_k: float
    k: int
    n_recordings: int
    n_pairs: int
    per_query_precision: dict[str, float]
    per_class_accuracy: dict[str, float]


def evaluate(
    model: TlsModel,
    table: EmbeddingTable,
    db: CorpusDatabase,
    pairs: PairDataset | Sequence[tuple[str, str]],
    queries: dict[str, str],
    k: int = 3,
    mode: str = DEFAULT_MODE,
    batch_size: int = 64,
) -> EvalReport:
    """Score a pair set: loss, query classification accuracy, precision@k.

    `queries` maps free text to the fault class it stands for. A class
    score for a recording is the max over that class's queries; the
    predicted class is the best class (first wins on ties). Every truth
    class present in the pairs must be covered by some query.
    """
    pair_list = list(pairs.pairs if isinstance(pairs, PairDataset) else pairs)
    if not pair_list:
        raise ValueError("no pairs to evaluate")
    if not queries:
        raise ValueError("queries must be non-empty")
    if k < 1:
        raise ValueError("k must be at least 1")

    by_id = db.recording_by_id()
    seen: set[str] = set()
    recordings = []
    for rec_id, _ in pair_list:
        if rec_id not in seen:
            seen.add(rec_id)
            recordings.append(by_id[rec_id])
    for rec in recordings:
        if rec.truth_class is None:
            raise ValueError(f"recording {rec.recording_id} has no truth class")
    present = {rec.truth_class for rec in recordings}
    covered = set(queries.values())
    missing = sorted(present - covered)
    if missing:
        raise ValueError(f"no query covers truth classes: {', '.join(missing)}")

    texts, spectra = pair_matrices(db, table, pair_list)
    val_loss = batch_mean_loss(model, texts, spectra, batch_size)

    query_texts = list(queries.keys())
    matrix = zero_shot(model, table, query_texts, recordings, mode)

    classes: list[str] = []
    for cls in queries.values():
        if cls not in classes:
            classes.append(cls)
    class_scores = np.stack(
        [
            matrix.scores[[i for i, q in enumerate(query_texts) if queries[q] == cls]].max(axis=0)
            for cls in classes
        ]
    )
    predicted = [classes[i] for i in np.argmax(class_scores, axis=0)]
    truth = [rec.truth_class for rec in recordings]
    hits = [p == t for p, t in zip(predicted, truth)]
    accuracy = float(np.mean(hits))

    per_class: dict[str, float] = {}
    for cls in classes:
        flags = [h for h, t in zip(hits, truth) if t == cls]
        if flags:
            per_class[cls] = float(np.mean(flags))

    k_eff = min(k, len(recordings))
    per_query: dict[str, float] = {}
    for i, q in enumerate(query_texts):
        ranked = sorted(
            zip(matrix.scores[i], recordings),
            key=lambda pair: (-pair[0], pair[1].recording_id),
        )
        top = ranked[:k_eff]
        per_query[q] = float(
            np.mean([rec.truth_class == queries[q] for _, rec in top])
        )
    precision = float(np.mean(list(per_query.values())))

    return EvalReport(
        val_loss=val_loss,
        zero_shot_accuracy=accuracy,
        precision_at_k=precision,
        k=k_eff,
        n_recordings=len(recordings),
        n_pairs=len(pair_list),
        per_query_precision=per_query,
        per_class_accuracy=per_class,
    )

"""Soft-target contrastive loss over a batch of text/spectrum pairs.

Both sides of a batch are projected into the joint space and compared via
a scaled dot-product logit matrix. Instead of one-hot targets, the target
distribution for each row is a softmax over the averaged self-similarities
of the two modalities, so near-duplicate annotations (common in practice:
the same fault text recurs across many recordings) are not pushed apart.
Targets are treated as constants when differentiating.

All losses are natural-log cross entropies averaged over the batch, and
the published total is the mean of the text-side and spectrum-side terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LossBreakdown:
    """Text-side, spectrum-side, and combined contrastive loss (nats)."""

    text_loss: float
    spectrum_loss: float

    @property
    def total(self) -> float:
        return 0.5 * (self.text_loss + self.spectrum_loss)


def _check_batch(z_text: np.ndarray, z_spec: np.ndarray, temperature: float) -> None:
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    if z_text.ndim != 2 or z_spec.ndim != 2:
        raise ValueError("embeddings must be 2-d (batch, dim)")
    if z_text.shape != z_spec.shape:
        raise ValueError(
            f"batch shapes differ: text {z_text.shape} vs spectrum {z_spec.shape}"
        )
    for name, z in (("text", z_text), ("spectrum", z_spec)):
        bad = ~np.isfinite(z).all(axis=1)
        if bad.any():
            row = int(np.argmax(bad))
            raise ValueError(f"non-finite {name} embedding in batch row {row}")


def batch_similarities(
    z_text: np.ndarray, z_spec: np.ndarray, temperature: float = 1.0
) -> np.ndarray:
    """Cross-modal logits: L[i, j] = (z_text[i] . z_spec[j]) / temperature."""
    z_text = np.asarray(z_text, dtype=float)
    z_spec = np.asarray(z_spec, dtype=float)
    _check_batch(z_text, z_spec, temperature)
    return z_text @ z_spec.T / temperature


def soft_targets(
    z_text: np.ndarray, z_spec: np.ndarray, temperature: float = 1.0
) -> np.ndarray:
    """Row-softmax of the averaged within-modality similarity matrices."""
    z_text = np.asarray(z_text, dtype=float)
    z_spec = np.asarray(z_spec, dtype=float)
    _check_batch(z_text, z_spec, temperature)
    self_sim = (z_text @ z_text.T + z_spec @ z_spec.T) / (2.0 * temperature)
    return _row_softmax(self_sim)


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _row_log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _resolve_targets(
    z_text: np.ndarray, z_spec: np.ndarray, temperature: float, targets: np.ndarray | None
) -> np.ndarray:
    if targets is None:
        return soft_targets(z_text, z_spec, temperature)
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (len(z_text), len(z_text)):
        raise ValueError(
            f"targets shape {targets.shape} does not match batch size {len(z_text)}"
        )
    return targets


def contrastive_loss(
    z_text: np.ndarray,
    z_spec: np.ndarray,
    temperature: float = 1.0,
    targets: np.ndarray | None = None,
) -> LossBreakdown:
    """Cross entropy between soft targets and both softmax views of the logits.

    text_loss averages CE(targets[i], softmax over logit row i);
    spectrum_loss averages CE(targets^T[i], softmax over logit column i).
    Targets default to the batch's own soft targets; passing them
    explicitly keeps them fixed, which is what finite-difference checks
    of the stop-gradient objective need.
    """
    z_text = np.asarray(z_text, dtype=float)
    z_spec = np.asarray(z_spec, dtype=float)
    logits = batch_similarities(z_text, z_spec, temperature)
    targets = _resolve_targets(z_text, z_spec, temperature, targets)
    batch = logits.shape[0]
    text_loss = -(targets * _row_log_softmax(logits)).sum() / batch
    spectrum_loss = -(targets.T * _row_log_softmax(logits.T)).sum() / batch
    return LossBreakdown(text_loss=float(text_loss), spectrum_loss=float(spectrum_loss))


def loss_backward(
    z_text: np.ndarray,
    z_spec: np.ndarray,
    temperature: float = 1.0,
    targets: np.ndarray | None = None,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Loss plus exact gradients of the total w.r.t. both embedding batches.

    Targets are constants, so only the log-softmax terms differentiate.
    Text side per logit: (softmax(row) - targets) / B. Spectrum side works
    on columns whose target rows are not normalized, hence the column mass
    factor: (colmass * softmax(col) - targets) / B.
    """
    z_text = np.asarray(z_text, dtype=float)
    z_spec = np.asarray(z_spec, dtype=float)
    logits = batch_similarities(z_text, z_spec, temperature)
    targets = _resolve_targets(z_text, z_spec, temperature, targets)
    batch = logits.shape[0]
    text_loss = -(targets * _row_log_softmax(logits)).sum() / batch
    spectrum_loss = -(targets.T * _row_log_softmax(logits.T)).sum() / batch
    breakdown = LossBreakdown(
        text_loss=float(text_loss), spectrum_loss=float(spectrum_loss)
    )

    probs_rows = _row_softmax(logits)
    d_text_side = (probs_rows - targets) / batch
    probs_cols = _row_softmax(logits.T).T  # softmax over each column of logits
    col_mass = targets.sum(axis=0, keepdims=True)
    d_spec_side = (col_mass * probs_cols - targets) / batch
    d_logits = 0.5 * (d_text_side + d_spec_side)

    d_z_text = d_logits @ z_spec / temperature
    d_z_spec = d_logits.T @ z_text / temperature
    return breakdown, d_z_text, d_z_spec

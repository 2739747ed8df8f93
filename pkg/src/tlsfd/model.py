"""Joint embedding model: one projection head per modality plus persistence.

A model is two independent heads (text 768 -> 64, spectrum 3200 -> 64)
sharing a softmax temperature. Checkpoints are a single JSON document
with every parameter serialized at full float precision, so a reloaded
model reproduces scores bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import SPECTRUM_BINS
from .embeddings import EMBEDDING_DIM
from .nn import OUT_DIM, ProjectionHead, init_head

MODEL_FORMAT = "tlsfd-model"
MODEL_VERSION = 1


class ModelError(ValueError):
    """Malformed or inconsistent checkpoint data."""


@dataclass
class TlsModel:
    text_head: ProjectionHead
    spectrum_head: ProjectionHead
    temperature: float = 1.0
    meta: dict[str, Any] = field(default_factory=dict)


def create_model(
    seed: int | np.random.SeedSequence,
    text_in_dim: int = EMBEDDING_DIM,
    spectrum_in_dim: int = SPECTRUM_BINS,
    out_dim: int = OUT_DIM,
    dropout_rate: float = 0.1,
    temperature: float = 1.0,
) -> TlsModel:
    """Fresh model with seeded initialization, one child stream per head."""
    if temperature <= 0.0:
        raise ModelError("temperature must be positive")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    text_seq, spec_seq = root.spawn(2)
    return TlsModel(
        text_head=init_head(text_in_dim, text_seq, out_dim, dropout_rate),
        spectrum_head=init_head(spectrum_in_dim, spec_seq, out_dim, dropout_rate),
        temperature=temperature,
    )


def _head_to_json(head: ProjectionHead) -> dict[str, Any]:
    return {
        "in_dim": head.in_dim,
        "out_dim": head.out_dim,
        "dropout_rate": head.dropout_rate,
        "W1": head.W1.tolist(),
        "b1": head.b1.tolist(),
        "W2": head.W2.tolist(),
        "b2": head.b2.tolist(),
        "ln_gain": head.ln_gain.tolist(),
        "ln_bias": head.ln_bias.tolist(),
    }


def _head_from_json(doc: dict[str, Any], label: str) -> ProjectionHead:
    try:
        in_dim = int(doc["in_dim"])
        out_dim = int(doc["out_dim"])
        head = ProjectionHead(
            in_dim=in_dim,
            out_dim=out_dim,
            W1=np.array(doc["W1"], dtype=float),
            b1=np.array(doc["b1"], dtype=float),
            W2=np.array(doc["W2"], dtype=float),
            b2=np.array(doc["b2"], dtype=float),
            ln_gain=np.array(doc["ln_gain"], dtype=float),
            ln_bias=np.array(doc["ln_bias"], dtype=float),
            dropout_rate=float(doc["dropout_rate"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad {label} head in checkpoint: {exc}") from exc
    expected = {
        "W1": (out_dim, in_dim),
        "b1": (out_dim,),
        "W2": (out_dim, out_dim),
        "b2": (out_dim,),
        "ln_gain": (out_dim,),
        "ln_bias": (out_dim,),
    }
    for name, shape in expected.items():
        value = getattr(head, name)
        if value.shape != shape:
            raise ModelError(
                f"{label} head parameter {name} has shape {value.shape}, expected {shape}"
            )
        if not np.all(np.isfinite(value)):
            raise ModelError(f"{label} head parameter {name} contains non-finite values")
    return head


def save_model(model: TlsModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "temperature": model.temperature,
        "meta": model.meta,
        "text_head": _head_to_json(model.text_head),
        "spectrum_head": _head_to_json(model.spectrum_head),
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> TlsModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelError("not a model checkpoint")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported checkpoint version {doc.get('version')!r}")
    temperature = float(doc.get("temperature", 0.0))
    if temperature <= 0.0:
        raise ModelError("temperature must be positive")
    return TlsModel(
        text_head=_head_from_json(doc.get("text_head", {}), "text"),
        spectrum_head=_head_from_json(doc.get("spectrum_head", {}), "spectrum"),
        temperature=temperature,
        meta=doc.get("meta", {}) or {},
    )

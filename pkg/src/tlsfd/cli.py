"""Command-line entry points: gen, train, eval, retrieve, zeroshot, serve.

Results go to standard output as line-delimited JSON records; progress
and diagnostics go to standard error. Exit codes: 0 success, 1 runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .corpus import (
    load_corpus,
    propagate_annotations,
    save_corpus,
    split_by_asset,
    timestamp_to_iso,
)
from .embeddings import EmbeddingTable, load_embedding_table
from .inference import NORMALIZATION_MODES, DEFAULT_MODE, retrieve, zero_shot
from .model import load_model, save_model
from .synth import DEFAULT_QUERIES, default_config, gen_corpus, load_config
from .training import TrainConfig, evaluate, train

QUERIES_FORMAT = "tlsfd-queries"
QUERIES_VERSION = 1
DEFAULT_PORT = 8000


def save_queries(queries: dict[str, str], path: str | Path) -> None:
    """Write a query-to-class map as line-delimited JSON with a header."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": QUERIES_FORMAT, "version": QUERIES_VERSION}) + "\n")
        for query, fault_class in queries.items():
            fh.write(json.dumps({"query": query, "fault_class": fault_class}) + "\n")


def load_queries(path: str | Path) -> dict[str, str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("queries file is empty")
    header = json.loads(lines[0])
    if header.get("format") != QUERIES_FORMAT:
        raise ValueError("not a queries file")
    queries: dict[str, str] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        row = json.loads(line)
        if "query" not in row or "fault_class" not in row:
            raise ValueError(f"queries file line {i}: need query and fault_class")
        queries[str(row["query"])] = str(row["fault_class"])
    if not queries:
        raise ValueError("queries file has no query rows")
    return queries


def default_queries() -> dict[str, str]:
    """Built-in query set, one fault class each."""
    return {q: cls.value for q, cls in DEFAULT_QUERIES.items()}


def _load_table(path: str | None) -> EmbeddingTable:
    if path is None:
        return EmbeddingTable(vectors={}, source="fallback")
    return load_embedding_table(path)


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record) + "\n")


def _info(message: str) -> None:
    sys.stderr.write(message + "\n")


def _cmd_gen(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        config.seed = args.seed
    _info(f"generating corpus: {config.n_assets} assets, seed {config.seed}")
    db = gen_corpus(config)
    save_corpus(db, args.out)
    _emit(
        {
            "kind": "corpus",
            "out": str(args.out),
            "assets": len(db.assets),
            "recordings": len(db.recordings),
            "annotations": len(db.annotations),
        }
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    db = load_corpus(args.corpus)
    table = _load_table(args.embeddings)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        temperature=args.tau,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    _info(
        f"training on {len(db.recordings)} recordings, "
        f"{config.epochs} epochs, batch {config.batch_size}"
    )
    model, history = train(db, table, config)
    for stats in history.epochs:
        _emit(
            {
                "epoch": stats.epoch,
                "train_loss": stats.train_loss,
                "val_loss": stats.val_loss,
            }
        )
    save_model(model, args.out)
    _emit(
        {
            "kind": "model",
            "out": str(args.out),
            "n_train_pairs": history.n_train_pairs,
            "n_val_pairs": history.n_val_pairs,
        }
    )
    return 0


def _val_pairs_for_eval(db, model, args):
    """Rebuild the held-out pair set the checkpoint was trained against."""
    meta = model.meta or {}
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    val_fraction = (
        args.val_fraction
        if args.val_fraction is not None
        else float(meta.get("val_fraction", 0.2))
    )
    window_days = int(meta.get("window_days", 10))
    pairs = propagate_annotations(db, window_days)
    _, val_set = split_by_asset(pairs, db, val_fraction, seed)
    return val_set


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    db = load_corpus(args.corpus)
    table = _load_table(args.embeddings)
    queries = load_queries(args.queries)
    val_set = _val_pairs_for_eval(db, model, args)
    report = evaluate(model, table, db, val_set, queries, k=args.k, mode=args.mode)
    _emit(
        {
            "kind": "eval",
            "val_loss": report.val_loss,
            "zero_shot_accuracy": report.zero_shot_accuracy,
            "precision_at_k": report.precision_at_k,
            "k": report.k,
            "n_recordings": report.n_recordings,
            "n_pairs": report.n_pairs,
            "per_query_precision": report.per_query_precision,
            "per_class_accuracy": report.per_class_accuracy,
        }
    )
    return 0


def _cmd_retrieve(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    db = load_corpus(args.corpus)
    table = _load_table(args.embeddings)
    by_id = db.recording_by_id()
    hits = retrieve(model, table, db, args.query, args.k, args.mode)
    for rank, hit in enumerate(hits, start=1):
        _emit(
            {
                "rank": rank,
                "recording_id": hit.recording_id,
                "score": hit.score,
                "asset_id": hit.asset_id,
                "timestamp": timestamp_to_iso(hit.timestamp),
                "truth_class": by_id[hit.recording_id].truth_class,
                "annotation": hit.annotation_text,
            }
        )
    return 0


def _cmd_zeroshot(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    db = load_corpus(args.corpus)
    table = _load_table(args.embeddings)
    queries = list(load_queries(args.queries).keys())
    by_id = db.recording_by_id()
    wanted = [r.strip() for r in args.recordings.split(",") if r.strip()]
    if not wanted:
        raise ValueError("no recording ids given")
    missing = [r for r in wanted if r not in by_id]
    if missing:
        raise ValueError(f"unknown recording ids: {', '.join(missing)}")
    recordings = [by_id[r] for r in wanted]
    matrix = zero_shot(model, table, queries, recordings, args.mode)
    for j, rec_id in enumerate(matrix.recording_ids):
        best = matrix.best_query_index[j]
        _emit(
            {
                "recording_id": rec_id,
                "argmax": matrix.queries[best],
                "scores": {
                    q: float(matrix.scores[i, j]) for i, q in enumerate(matrix.queries)
                },
            }
        )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    model = load_model(args.model)
    db = load_corpus(args.corpus)
    table = _load_table(args.embeddings)
    app = create_app(ServiceState(model=model, db=db, table=table))
    port = args.port if args.port is not None else int(os.environ.get("TLSFD_PORT", DEFAULT_PORT))
    _info(f"serving on {args.host}:{port}")
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlsfd",
        description="Joint text/spectrum embeddings for fault retrieval and zero-shot classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--config", help="generator config file (defaults to the built-in preset)")
    p.add_argument("--out", required=True, help="corpus output path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", help="text embedding table (hashed fallback if omitted)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its held-out split")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True, help="queries file (tlsfd-queries)")
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--mode", choices=NORMALIZATION_MODES, default=DEFAULT_MODE)
    p.add_argument("--seed", type=int, help="override the split seed from the checkpoint")
    p.add_argument("--val-fraction", type=float, help="override the split fraction")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("retrieve", help="top-k recordings for a free-text query")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=NORMALIZATION_MODES, default=DEFAULT_MODE)
    p.add_argument("--embeddings")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("zeroshot", help="score queries against chosen recordings")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True, help="queries file (tlsfd-queries)")
    p.add_argument("--recordings", required=True, help="comma-separated recording ids")
    p.add_argument("--mode", choices=NORMALIZATION_MODES, default=DEFAULT_MODE)
    p.add_argument("--embeddings")
    p.set_defaults(func=_cmd_zeroshot)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--port", type=int, help="defaults to TLSFD_PORT or 8000")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--embeddings")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures map to exit 1
        _info(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

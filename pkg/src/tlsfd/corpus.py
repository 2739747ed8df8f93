"""Condition-monitoring corpus: schema, annotation propagation, splits, persistence.

A corpus is a hierarchy of assets (machine parts), each with one or more
subassets (sensor or filter channels) holding spectrum recordings, plus
dated free-text annotations attached at asset level. Annotations are
propagated down to recording level by a day window around the annotation
date, which is what turns sparse analyst notes into (spectrum, text)
training pairs.

Timestamps are integer epoch seconds in memory and UTC ISO-8601 strings
(``YYYY-MM-DDTHH:MM:SSZ``) in files. Corpus files are UTF-8 line-delimited
JSON records with a header line, then one record per recording/annotation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

SPECTRUM_BINS = 3200
SPECTRUM_MAX_HZ = 500.0
CORPUS_FORMAT = "tlsfd-corpus"
CORPUS_VERSION = 1
DEFAULT_WINDOW_DAYS = 10

_SECONDS_PER_DAY = 86400
_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class CorpusValidationError(ValueError):
    """A record violates the corpus schema."""


class CorpusParseError(ValueError):
    """A corpus file line could not be parsed."""


class SplitError(ValueError):
    """A train/validation split cannot be formed."""


@dataclass
class Recording:
    """One stored spectrum measurement on a subasset."""

    recording_id: str
    asset_id: str
    subasset_id: str
    timestamp: int  # epoch seconds, UTC
    sample_rate_hz: float
    spectrum: np.ndarray  # shape (3200,), bins spanning 0-500 Hz
    truth_class: str | None = None  # synthetic ground truth only
    truth_severity: float | None = None


@dataclass
class Annotation:
    """Free-text fault description attached to an asset at a date."""

    annotation_id: str
    asset_id: str
    date: int  # epoch seconds, UTC
    text: str


@dataclass
class CorpusDatabase:
    """Assets with their subassets, recordings and annotations."""

    assets: dict[str, list[str]] = field(default_factory=dict)
    recordings: list[Recording] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)

    def recording_by_id(self) -> dict[str, Recording]:
        return {r.recording_id: r for r in self.recordings}


@dataclass
class PairDataset:
    """Flat (recording_id, annotation_id) pairs from window propagation."""

    pairs: list[tuple[str, str]]
    window_days: int

    def __len__(self) -> int:
        return len(self.pairs)


def timestamp_to_iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime(_TS_FORMAT)


def iso_to_timestamp(text: str) -> int:
    dt = datetime.strptime(text, _TS_FORMAT).replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def validate_corpus(db: CorpusDatabase) -> None:
    """Raise CorpusValidationError naming the first offending record."""
    seen_ids: set[str] = set()
    for rec in db.recordings:
        if rec.recording_id in seen_ids:
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: duplicate recording_id"
            )
        seen_ids.add(rec.recording_id)
        spectrum = np.asarray(rec.spectrum)
        if spectrum.shape != (SPECTRUM_BINS,):
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: spectrum has "
                f"{spectrum.size} values, expected {SPECTRUM_BINS}"
            )
        if not np.all(np.isfinite(spectrum)):
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: spectrum contains non-finite values"
            )
        if np.any(spectrum < 0):
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: spectrum contains negative values"
            )
        if rec.sample_rate_hz <= 0:
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: sample_rate_hz must be positive"
            )
        subassets = db.assets.get(rec.asset_id)
        if subassets is None or rec.subasset_id not in subassets:
            raise CorpusValidationError(
                f"recording {rec.recording_id!r}: unknown asset/subasset "
                f"({rec.asset_id!r}, {rec.subasset_id!r})"
            )
    for ann in db.annotations:
        if not ann.text.strip():
            raise CorpusValidationError(
                f"annotation {ann.annotation_id!r}: empty text"
            )
        if ann.asset_id not in db.assets:
            raise CorpusValidationError(
                f"annotation {ann.annotation_id!r}: unknown asset_id {ann.asset_id!r}"
            )


def propagate_annotations(
    db: CorpusDatabase, window_days: int = DEFAULT_WINDOW_DAYS
) -> PairDataset:
    """Pair every annotation with the same-asset recordings inside its window.

    A recording matches when it shares the annotation's asset and its
    timestamp lies within +-window_days of the annotation date, boundary
    included. Pairs come back sorted by (annotation_id, recording timestamp).
    """
    if window_days < 1:
        raise ValueError("window_days must be >= 1")
    validate_corpus(db)
    window_s = window_days * _SECONDS_PER_DAY

    by_asset: dict[str, list[Recording]] = {}
    for rec in db.recordings:
        by_asset.setdefault(rec.asset_id, []).append(rec)

    pairs: list[tuple[str, str, int]] = []
    for ann in db.annotations:
        for rec in by_asset.get(ann.asset_id, []):
            if abs(rec.timestamp - ann.date) <= window_s:
                pairs.append((rec.recording_id, ann.annotation_id, rec.timestamp))
    pairs.sort(key=lambda p: (p[1], p[2], p[0]))
    return PairDataset(pairs=[(r, a) for r, a, _ in pairs], window_days=window_days)


def split_by_asset(
    pairs: PairDataset,
    db: CorpusDatabase,
    val_fraction: float,
    seed: int,
) -> tuple[PairDataset, PairDataset]:
    """Partition pairs into train/val by asset, never splitting an asset.

    Assets are shuffled with the seed, then a prefix is assigned to
    validation so that the validation pair count lands as close to
    val_fraction of the total as the per-asset granularity allows.
    Identical annotation texts recur across a corpus, so splitting at
    pair level would leak labels; asset-level splitting avoids that.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must be in (0, 1)")
    if not pairs.pairs:
        raise SplitError("cannot split an empty pair dataset")

    asset_of_annotation = {a.annotation_id: a.asset_id for a in db.annotations}
    pair_assets: list[str] = []
    counts: dict[str, int] = {}
    for _, ann_id in pairs.pairs:
        asset = asset_of_annotation[ann_id]
        if asset not in counts:
            pair_assets.append(asset)
        counts[asset] = counts.get(asset, 0) + 1
    if len(pair_assets) < 2:
        raise SplitError("need at least 2 distinct assets to split")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pair_assets))
    shuffled = [pair_assets[i] for i in order]

    total = len(pairs.pairs)
    target = val_fraction * total
    best_k, best_gap, cum = 1, float("inf"), 0
    for k in range(1, len(shuffled)):  # keep both sides non-empty
        cum += counts[shuffled[k - 1]]
        gap = abs(cum - target)
        if gap < best_gap:
            best_k, best_gap = k, gap
    val_assets = set(shuffled[:best_k])

    train_pairs = [
        p for p in pairs.pairs if asset_of_annotation[p[1]] not in val_assets
    ]
    val_pairs = [p for p in pairs.pairs if asset_of_annotation[p[1]] in val_assets]
    return (
        PairDataset(pairs=train_pairs, window_days=pairs.window_days),
        PairDataset(pairs=val_pairs, window_days=pairs.window_days),
    )


def save_corpus(db: CorpusDatabase, path: str | Path) -> None:
    """Write a corpus as line-delimited JSON; save then load round-trips exactly."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION}))
        fh.write("\n")
        for rec in db.recordings:
            record = {
                "kind": "recording",
                "recording_id": rec.recording_id,
                "asset_id": rec.asset_id,
                "subasset_id": rec.subasset_id,
                "timestamp": timestamp_to_iso(rec.timestamp),
                "sample_rate_hz": rec.sample_rate_hz,
                "spectrum": np.asarray(rec.spectrum, dtype=float).tolist(),
            }
            if rec.truth_class is not None:
                record["truth_class"] = rec.truth_class
            if rec.truth_severity is not None:
                record["truth_severity"] = rec.truth_severity
            fh.write(json.dumps(record))
            fh.write("\n")
        for ann in db.annotations:
            fh.write(
                json.dumps(
                    {
                        "kind": "annotation",
                        "annotation_id": ann.annotation_id,
                        "asset_id": ann.asset_id,
                        "date": timestamp_to_iso(ann.date),
                        "text": ann.text,
                    }
                )
            )
            fh.write("\n")


def load_corpus(path: str | Path) -> CorpusDatabase:
    """Load and validate a corpus file written by save_corpus.

    The asset map is rebuilt from the recording lines, so annotations
    pointing at assets without any recording fail validation.
    """
    path = Path(path)
    recordings: list[Recording] = []
    annotations: list[Annotation] = []
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"line 1: invalid JSON header: {exc}") from exc
        if header.get("format") != CORPUS_FORMAT:
            raise CorpusParseError(
                f"line 1: expected format {CORPUS_FORMAT!r}, got {header.get('format')!r}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"line {lineno}: invalid JSON: {exc}") from exc
            kind = record.get("kind")
            try:
                if kind == "recording":
                    spectrum = np.asarray(record["spectrum"], dtype=float)
                    if spectrum.shape != (SPECTRUM_BINS,):
                        raise CorpusValidationError(
                            f"line {lineno}: spectrum has {spectrum.size} values, "
                            f"expected {SPECTRUM_BINS}"
                        )
                    recordings.append(
                        Recording(
                            recording_id=record["recording_id"],
                            asset_id=record["asset_id"],
                            subasset_id=record["subasset_id"],
                            timestamp=iso_to_timestamp(record["timestamp"]),
                            sample_rate_hz=float(record["sample_rate_hz"]),
                            spectrum=spectrum,
                            truth_class=record.get("truth_class"),
                            truth_severity=record.get("truth_severity"),
                        )
                    )
                elif kind == "annotation":
                    annotations.append(
                        Annotation(
                            annotation_id=record["annotation_id"],
                            asset_id=record["asset_id"],
                            date=iso_to_timestamp(record["date"]),
                            text=record["text"],
                        )
                    )
                else:
                    raise CorpusParseError(
                        f"line {lineno}: unknown record kind {kind!r}"
                    )
            except (KeyError, ValueError, TypeError) as exc:
                if isinstance(exc, (CorpusParseError, CorpusValidationError)):
                    raise
                raise CorpusParseError(f"line {lineno}: malformed record: {exc}") from exc

    db = CorpusDatabase(
        assets=derive_assets(recordings),
        recordings=recordings,
        annotations=annotations,
    )
    validate_corpus(db)
    return db


def derive_assets(recordings: list[Recording]) -> dict[str, list[str]]:
    """Asset map implied by a recording list, in first-seen order."""
    assets: dict[str, list[str]] = {}
    for rec in recordings:
        subassets = assets.setdefault(rec.asset_id, [])
        if rec.subasset_id not in subassets:
            subassets.append(rec.subasset_id)
    return assets

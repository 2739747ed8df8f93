"""Synthetic condition-monitoring corpus with kinematically plausible faults.

Stands in for proprietary mill data: assets get a fault class, a shaft
speed and a dated annotation; recordings around the annotation date carry
class-consistent spectra. Bearing fault peaks sit at the ball-pass
frequencies implied by the bearing geometry, cable/sensor faults show the
characteristic pile-up of amplitude near 0 Hz, and looseness shows
running-speed harmonics. The three corruption rates emulate the usual
weak-label defects: missing annotations, healthy recordings inside a
faulty window, and wrong class words in the text.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import (
    SPECTRUM_BINS,
    SPECTRUM_MAX_HZ,
    Annotation,
    CorpusDatabase,
    Recording,
    derive_assets,
    iso_to_timestamp,
    validate_corpus,
)

CONFIG_FORMAT = "tlsfd-config"
CONFIG_VERSION = 1

_BIN_HZ = SPECTRUM_MAX_HZ / SPECTRUM_BINS  # 0.15625 Hz per bin
_PEAK_SIGMA_BINS = 3.0  # fixed Gaussian peak width
_BASE_DATE_TS = iso_to_timestamp("2022-01-01T00:00:00Z")
_SECONDS_PER_DAY = 86400
_SPECTRUM_DECIMALS = 6  # quantized at generation to keep corpus files compact


class ConfigError(ValueError):
    """Generator configuration is invalid."""


class GenerationError(ValueError):
    """A spectrum cannot be generated for the requested parameters."""


class FaultClass(str, Enum):
    HEALTHY = "Healthy"
    BPFO = "BPFO"
    BPFI = "BPFI"
    CABLE_FAULT = "CableFault"
    SENSOR_FAULT = "SensorFault"
    LOOSENESS = "Looseness"


class Stage(str, Enum):
    DETECTED = "detected"
    WORSENED = "worsened"
    REPLACED = "replaced"


@dataclass(frozen=True)
class BearingGeometry:
    n_rolling_elements: int
    ball_diameter_ratio: float  # d/D
    contact_angle_rad: float

    def __post_init__(self) -> None:
        if self.n_rolling_elements < 1:
            raise ValueError("n_rolling_elements must be >= 1")
        if not 0.0 < self.ball_diameter_ratio < 1.0:
            raise ValueError("ball_diameter_ratio must be in (0, 1)")
        if not 0.0 <= self.contact_angle_rad < math.pi / 2:
            raise ValueError("contact_angle_rad must be in [0, pi/2)")


DEFAULT_GEOMETRY = BearingGeometry(
    n_rolling_elements=9, ball_diameter_ratio=0.25, contact_angle_rad=0.35
)


@dataclass
class CorruptionRates:
    incomplete_rate: float = 0.0  # drop the annotation, keep faulty recordings
    inexact_rate: float = 0.0  # mix healthy recordings into a faulty window
    inaccurate_rate: float = 0.0  # wrong class word in the annotation text


def _default_distribution() -> dict[FaultClass, float]:
    return {
        FaultClass.HEALTHY: 0.2,
        FaultClass.BPFO: 0.2,
        FaultClass.CABLE_FAULT: 0.2,
        FaultClass.SENSOR_FAULT: 0.2,
        FaultClass.LOOSENESS: 0.2,
    }


@dataclass
class GeneratorConfig:
    n_assets: int = 60
    classes_distribution: dict[FaultClass, float] = field(
        default_factory=_default_distribution
    )
    rpm_range: tuple[float, float] = (600.0, 1800.0)
    recordings_per_annotation: int = 50
    window_days: int = 10
    noise_floor: float = 0.01
    corruption: CorruptionRates = field(default_factory=CorruptionRates)
    seed: int = 1


def default_config() -> GeneratorConfig:
    return GeneratorConfig()


def mill_scale_config() -> GeneratorConfig:
    """Corpus at the scale of a six-month mill extraction (~109 annotations,
    ~190 recordings each)."""
    return GeneratorConfig(n_assets=109, recordings_per_annotation=193)


def validate_config(config: GeneratorConfig) -> None:
    if config.n_assets < 1:
        raise ConfigError("n_assets must be >= 1")
    if config.recordings_per_annotation < 1:
        raise ConfigError("recordings_per_annotation must be >= 1")
    if config.window_days < 1:
        raise ConfigError("window_days must be >= 1")
    if config.noise_floor <= 0:
        raise ConfigError("noise_floor must be positive")
    weights = list(config.classes_distribution.values())
    if not weights or any(w < 0 for w in weights):
        raise ConfigError("classes_distribution weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError(
            f"classes_distribution weights sum to {sum(weights)!r}, expected 1"
        )
    low, high = config.rpm_range
    if not (0 < low < high):
        raise ConfigError("rpm_range must satisfy 0 < low < high")
    for name in ("incomplete_rate", "inexact_rate", "inaccurate_rate"):
        rate = getattr(config.corruption, name)
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"corruption.{name} must be in [0, 1]")


def bearing_frequencies(
    geom: BearingGeometry, shaft_hz: float
) -> tuple[float, float]:
    """Outer/inner race ball-pass frequencies for a shaft speed in Hz.

    bpfo = (n/2) * f_shaft * (1 - (d/D) cos phi)
    bpfi = (n/2) * f_shaft * (1 + (d/D) cos phi)
    """
    if shaft_hz <= 0:
        raise ValueError("shaft_hz must be positive")
    modulation = geom.ball_diameter_ratio * math.cos(geom.contact_angle_rad)
    base = 0.5 * geom.n_rolling_elements * shaft_hz
    return base * (1.0 - modulation), base * (1.0 + modulation)


def _add_peak(spectrum: np.ndarray, freq_hz: float, amplitude: float) -> None:
    center = freq_hz / _BIN_HZ
    bins = np.arange(SPECTRUM_BINS)
    spectrum += amplitude * np.exp(
        -((bins - center) ** 2) / (2.0 * _PEAK_SIGMA_BINS**2)
    )


def _add_harmonics(
    spectrum: np.ndarray,
    f0_hz: float,
    amplitude: float,
    decay: float,
    max_harmonics: int | None = None,
) -> int:
    k = 1
    while k * f0_hz < SPECTRUM_MAX_HZ:
        if max_harmonics is not None and k > max_harmonics:
            break
        _add_peak(spectrum, k * f0_hz, amplitude * decay ** (k - 1))
        k += 1
    return k - 1


_RESONANCE_HZ = 375.0  # impact-excited structural resonance band
_RESONANCE_WIDTH_HZ = 40.0


def gen_spectrum(
    fault_class: FaultClass,
    severity: float,
    shaft_hz: float,
    geom: BearingGeometry = DEFAULT_GEOMETRY,
    noise_floor: float = 0.01,
    seed: int = 0,
) -> np.ndarray:
    """Generate one 3200-bin spectrum (0-500 Hz) for a fault class.

    Each class leaves a characteristic footprint on top of a uniform
    noise floor. Bearing faults put a harmonic comb at the ball-pass
    frequency plus a high-band resonance bump (repetitive impacts ring
    the structure); looseness shows low-order shaft harmonics and a
    raised low-frequency floor; cable and sensor faults both dump bias
    energy near 0 Hz (similar on purpose, hard negatives for retrieval)
    but with different shapes: a flat block over the lowest 32 bins for
    a failing cable, a steep exponential over the first 64 for a
    drifting sensor. Amplitudes scale with severity; values are
    non-negative and quantized to 6 decimals.
    """
    if not 0.0 <= severity <= 1.0:
        raise ValueError("severity must be in [0, 1]")
    if shaft_hz <= 0:
        raise ValueError("shaft_hz must be positive")
    if noise_floor <= 0:
        raise ValueError("noise_floor must be positive")
    rng = np.random.default_rng(seed)
    spectrum = noise_floor * rng.uniform(0.5, 1.5, SPECTRUM_BINS)
    freqs = np.arange(SPECTRUM_BINS) * _BIN_HZ

    if fault_class in (FaultClass.BPFO, FaultClass.BPFI):
        bpfo, bpfi = bearing_frequencies(geom, shaft_hz)
        f0 = bpfo if fault_class is FaultClass.BPFO else bpfi
        if f0 >= SPECTRUM_MAX_HZ:
            raise GenerationError(
                f"characteristic frequency {f0:.1f} Hz has no harmonic "
                f"below {SPECTRUM_MAX_HZ:.0f} Hz"
            )
        _add_harmonics(spectrum, f0, severity * 0.5, decay=0.85, max_harmonics=8)
        spectrum += severity * 0.2 * np.exp(
            -((freqs - _RESONANCE_HZ) ** 2) / (2.0 * _RESONANCE_WIDTH_HZ**2)
        )
    elif fault_class is FaultClass.CABLE_FAULT:
        spectrum[:32] += severity * 2.5 * rng.uniform(0.9, 1.1, 32)
    elif fault_class is FaultClass.SENSOR_FAULT:
        spectrum[:64] += severity * 3.0 * np.exp(-np.arange(64) / 4.0)
    elif fault_class is FaultClass.LOOSENESS:
        _add_harmonics(spectrum, shaft_hz, severity * 0.4, decay=0.9, max_harmonics=10)
        spectrum += severity * 0.1 * np.exp(-freqs / 60.0)

    return np.round(spectrum, _SPECTRUM_DECIMALS)


_SEVERITY_WORDS = ((0.35, "low"), (0.7, "rising"), (1.01, "high"))

_HEALTHY_TEMPLATES = [
    "levels ok DC FS",
    "DC FS no remark",
    "DC FS all good keep running",
    "DC FS checked levels ok",
]

_TEMPLATES: dict[FaultClass, dict[Stage, list[str]]] = {
    FaultClass.HEALTHY: {stage: _HEALTHY_TEMPLATES for stage in Stage},
    FaultClass.BPFO: {
        Stage.DETECTED: [
            "BPFO Env {sev}",
            "BPFO {sev} levels keep watch",
            "{sev} BPFO indication in env",
        ],
        Stage.WORSENED: [
            "BPFO visible in mm/s as overtones WO written on BPFO",
            "BPFO {sev} levels WO written",
            "WO on BPFO overtones {sev}",
        ],
        Stage.REPLACED: [
            "bearing replaced levels of BPFO low again",
            "BPFO gone after bearing replaced",
        ],
    },
    FaultClass.BPFI: {
        Stage.DETECTED: [
            "BPFI Env {sev}",
            "BPFI {sev} levels keep watch",
            "{sev} BPFI indication in env",
        ],
        Stage.WORSENED: [
            "BPFI visible as overtones WO written on BPFI",
            "BPFI {sev} levels WO written",
        ],
        Stage.REPLACED: [
            "bearing replaced levels of BPFI low again",
            "BPFI gone after bearing replaced",
        ],
    },
    FaultClass.CABLE_FAULT: {
        Stage.DETECTED: [
            "cable noise {sev} check cable",
            "intermittent cable noise {sev}",
        ],
        Stage.WORSENED: [
            "WO written cable replacement",
            "cable noise {sev} WO written on cable",
        ],
        Stage.REPLACED: [
            "cable replaced signal ok again",
            "new cable mounted after cable fault",
        ],
    },
    FaultClass.SENSOR_FAULT: {
        Stage.DETECTED: [
            "sensor bias {sev} check sensor",
            "sensor fault suspected {sev} levels",
        ],
        Stage.WORSENED: [
            "Replace the sensor next stop",
            "WO written sensor replacement",
            "sensor bias {sev} WO written",
        ],
        Stage.REPLACED: [
            "sensor changed reading normal again",
            "new sensor mounted reading ok",
        ],
    },
    FaultClass.LOOSENESS: {
        Stage.DETECTED: [
            "looseness harmonics {sev} levels",
            "check foundation bolts looseness {sev}",
        ],
        Stage.WORSENED: [
            "breakdown risk looseness found",
            "WO written looseness breakdown",
            "looseness {sev} breakdown risk",
        ],
        Stage.REPLACED: [
            "bolts tightened looseness gone",
            "looseness fixed after breakdown stop",
        ],
    },
}

# Canonical short queries, one per default corpus class. Kept next to the
# templates because zero-shot evaluation relies on each query sharing
# wording with its class's annotation family.
DEFAULT_QUERIES: dict[str, FaultClass] = {
    "BPFO low levels": FaultClass.BPFO,
    "WO cable replacement": FaultClass.CABLE_FAULT,
    "Replace sensor": FaultClass.SENSOR_FAULT,
    "DC FS": FaultClass.HEALTHY,
    "Breakdown": FaultClass.LOOSENESS,
}


def severity_word(severity: float) -> str:
    for threshold, word in _SEVERITY_WORDS:
        if severity < threshold:
            return word
    return _SEVERITY_WORDS[-1][1]


def gen_annotation(
    fault_class: FaultClass, severity: float, stage: Stage, seed: int = 0
) -> str:
    """Draw an annotation text from the class/stage template family."""
    if not 0.0 <= severity <= 1.0:
        raise ValueError("severity must be in [0, 1]")
    rng = np.random.default_rng(seed)
    templates = _TEMPLATES[fault_class][stage]
    template = templates[int(rng.integers(len(templates)))]
    return template.format(sev=severity_word(severity))


def _stage_for(severity: float) -> Stage:
    if severity < 0.5:
        return Stage.DETECTED
    if severity < 0.8:
        return Stage.WORSENED
    return Stage.REPLACED


def gen_corpus(config: GeneratorConfig) -> CorpusDatabase:
    """Generate a full corpus: one annotation per asset, recordings inside
    the window, corruption applied, ground truth recorded uncorrupted."""
    validate_config(config)
    class_list = list(config.classes_distribution.keys())
    weights = np.array(
        [config.classes_distribution[c] for c in class_list], dtype=float
    )
    weights = weights / weights.sum()
    window_s = config.window_days * _SECONDS_PER_DAY
    asset_seeds = np.random.SeedSequence(config.seed).spawn(config.n_assets)

    recordings: list[Recording] = []
    annotations: list[Annotation] = []
    for i in range(config.n_assets):
        rng = np.random.default_rng(asset_seeds[i])
        asset_id = f"asset{i:04d}"
        fault_class = class_list[int(rng.choice(len(class_list), p=weights))]
        n_subassets = int(rng.integers(1, 4))
        subassets = [f"{asset_id}-ch{j}" for j in range(n_subassets)]
        rpm = float(rng.uniform(*config.rpm_range))
        shaft_hz = rpm / 60.0
        if fault_class is FaultClass.HEALTHY:
            severity = 0.0
        else:
            severity = float(rng.uniform(0.4, 1.0))
        stage = _stage_for(severity)
        ann_date = _BASE_DATE_TS + i * 30 * _SECONDS_PER_DAY + int(
            rng.integers(0, _SECONDS_PER_DAY)
        )

        drop_annotation = rng.random() < config.corruption.incomplete_rate
        inaccurate = rng.random() < config.corruption.inaccurate_rate
        text_class = fault_class
        if inaccurate:
            others = [c for c in class_list if c is not fault_class]
            if not others:
                others = [c for c in FaultClass if c is not fault_class]
            text_class = others[int(rng.integers(len(others)))]
        text = gen_annotation(
            text_class, severity, stage, seed=int(rng.integers(2**63))
        )

        for j in range(config.recordings_per_annotation):
            offset = int(rng.integers(-window_s, window_s + 1))
            rec_class = fault_class
            rec_severity = severity
            if fault_class is not FaultClass.HEALTHY:
                if rng.random() < config.corruption.inexact_rate:
                    rec_class = FaultClass.HEALTHY
                    rec_severity = 0.0
                else:
                    rec_severity = float(
                        np.clip(severity + rng.uniform(-0.08, 0.08), 0.05, 1.0)
                    )
            spectrum = gen_spectrum(
                rec_class,
                rec_severity,
                shaft_hz,
                geom=DEFAULT_GEOMETRY,
                noise_floor=config.noise_floor,
                seed=int(rng.integers(2**63)),
            )
            recordings.append(
                Recording(
                    recording_id=f"{asset_id}-rec{j:04d}",
                    asset_id=asset_id,
                    subasset_id=subassets[int(rng.integers(n_subassets))],
                    timestamp=ann_date + offset,
                    sample_rate_hz=1000.0,
                    spectrum=spectrum,
                    truth_class=rec_class.value,
                    truth_severity=round(rec_severity, 4),
                )
            )
        if not drop_annotation:
            annotations.append(
                Annotation(
                    annotation_id=f"{asset_id}-ann",
                    asset_id=asset_id,
                    date=ann_date,
                    text=text,
                )
            )

    db = CorpusDatabase(
        assets=derive_assets(recordings),
        recordings=recordings,
        annotations=annotations,
    )
    validate_corpus(db)
    return db


def save_config(config: GeneratorConfig, path: str | Path) -> None:
    record = {
        "kind": "config",
        "n_assets": config.n_assets,
        "classes_distribution": {
            c.value: w for c, w in config.classes_distribution.items()
        },
        "rpm_range": list(config.rpm_range),
        "recordings_per_annotation": config.recordings_per_annotation,
        "window_days": config.window_days,
        "noise_floor": config.noise_floor,
        "corruption": {
            "incomplete_rate": config.corruption.incomplete_rate,
            "inexact_rate": config.corruption.inexact_rate,
            "inaccurate_rate": config.corruption.inaccurate_rate,
        },
        "seed": config.seed,
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": CONFIG_FORMAT, "version": CONFIG_VERSION}))
        fh.write("\n")
        fh.write(json.dumps(record))
        fh.write("\n")


def load_config(path: str | Path) -> GeneratorConfig:
    with Path(path).open("r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line 1: invalid JSON header: {exc}") from exc
        if header.get("format") != CONFIG_FORMAT:
            raise ConfigError(
                f"line 1: expected format {CONFIG_FORMAT!r}, got {header.get('format')!r}"
            )
        record = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {lineno}: invalid JSON: {exc}") from exc
            if record.get("kind") != "config":
                raise ConfigError(f"line {lineno}: expected kind 'config'")
            break
    if record is None:
        raise ConfigError("no config record found")
    try:
        corruption = record.get("corruption", {})
        config = GeneratorConfig(
            n_assets=int(record["n_assets"]),
            classes_distribution={
                FaultClass(name): float(w)
                for name, w in record["classes_distribution"].items()
            },
            rpm_range=tuple(float(v) for v in record["rpm_range"]),
            recordings_per_annotation=int(record["recordings_per_annotation"]),
            window_days=int(record["window_days"]),
            noise_floor=float(record["noise_floor"]),
            corruption=CorruptionRates(
                incomplete_rate=float(corruption.get("incomplete_rate", 0.0)),
                inexact_rate=float(corruption.get("inexact_rate", 0.0)),
                inaccurate_rate=float(corruption.get("inaccurate_rate", 0.0)),
            ),
            seed=int(record["seed"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed config record: {exc}") from exc
    validate_config(config)
    return config

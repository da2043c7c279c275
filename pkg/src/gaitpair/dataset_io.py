"""Corpus ingestion and synthetic gait generation.

Recorded datasets are user-supplied (licensing): a corpus directory holds one
CSV per recording plus a ``manifest.json`` mapping files to (subject, position,
recording, sample rate).  The synthetic generator produces walking-like IMU
streams with a shared latent waveform per subject so intra-body structure
exists without redistributing any third-party data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import (
    MissingColumns,
    NonMonotoneTimestamps,
    SchemaMismatch,
    SignalTooShort,
)
from .gait import CycleDetection, GaitSequence, cycles_from_bounds, detect_cycles
from .signals import GRAVITY, ImuRecord, VerticalSignal

CSV_COLUMNS = ("timestamp_ms", "ax", "ay", "az", "gx", "gy", "gz")
MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1

_OSAKA_WARNINGS = (
    "osaka: all sensor units sit on nearby thigh positions on one harness; "
    "inter-position independence is limited",
    "osaka: only 6-8 gait cycles of stationary walk per subject; too short "
    "for full-length fingerprints",
)


@dataclass
class Corpus:
    records: list[ImuRecord]
    schema_version: int = SCHEMA_VERSION
    warnings: list[str] = dc_field(default_factory=list)

    def __post_init__(self) -> None:
        keys = [(r.subject_id, r.position, r.recording_id) for r in self.records]
        if len(set(keys)) != len(keys):
            raise SchemaMismatch("duplicate (subject, position, recording) key")

    @property
    def subjects(self) -> list[str]:
        return sorted({r.subject_id for r in self.records})

    @property
    def positions(self) -> list[str]:
        return sorted({r.position for r in self.records})


# -- CSV corpus -------------------------------------------------------------------

def _read_recording_csv(path: Path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        cols = tuple(c.strip() for c in header.split(","))
        missing = [c for c in CSV_COLUMNS if c not in cols]
        if missing:
            raise MissingColumns(f"{path.name}: missing columns {missing}")
        if cols != CSV_COLUMNS:
            raise SchemaMismatch(
                f"{path.name}: header {cols} != {CSV_COLUMNS}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return np.empty((0, len(CSV_COLUMNS)))
    if data.shape[1] != len(CSV_COLUMNS):
        raise SchemaMismatch(f"{path.name}: row width {data.shape[1]}")
    return data


def load_csv(path: str | Path, schema: tuple[str, ...] = CSV_COLUMNS) -> Corpus:
    """Load a corpus from a manifest file or a directory containing one."""
    if schema != CSV_COLUMNS:
        raise SchemaMismatch(f"unsupported schema {schema}")
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.exists():
        raise SchemaMismatch(f"no manifest at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest.get("recordings"), list):
        raise SchemaMismatch("manifest lacks a 'recordings' list")

    base = manifest_path.parent
    records = []
    for entry in manifest["recordings"]:
        for key in ("file", "subject_id", "position", "recording_id", "sample_rate_hz"):
            if key not in entry:
                raise SchemaMismatch(f"manifest entry missing {key!r}: {entry}")
        data = _read_recording_csv(base / entry["file"])
        t = data[:, 0] / 1000.0
        if t.size >= 2 and (np.diff(t) <= 0).any():
            raise NonMonotoneTimestamps(f"{entry['file']}: timestamps not increasing")
        records.append(ImuRecord(
            sample_rate=float(entry["sample_rate_hz"]),
            t=t,
            acc=data[:, 1:4],
            gyro=data[:, 4:7],
            subject_id=str(entry["subject_id"]),
            position=str(entry["position"]),
            recording_id=str(entry["recording_id"]),
        ))

    warnings = list(manifest.get("warnings", []))
    if manifest.get("dataset_family") == "osaka":
        warnings.extend(_OSAKA_WARNINGS)
    return Corpus(records=records,
                  schema_version=int(manifest.get("schema_version", SCHEMA_VERSION)),
                  warnings=warnings)


def save_csv(corpus: Corpus, out_dir: str | Path) -> Path:
    """Write a corpus as per-recording CSVs plus a manifest; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(corpus.records):
        name = f"rec_{i:04d}.csv"
        with open(out / name, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for j in range(rec.n_samples):
                # repr of a Python float is the shortest exact round-trip form
                row = [repr(float(rec.t[j]) * 1000.0)]
                row += [repr(float(v)) for v in rec.acc[j]]
                row += [repr(float(v)) for v in rec.gyro[j]]
                fh.write(",".join(row) + "\n")
        entries.append({
            "file": name,
            "subject_id": rec.subject_id,
            "position": rec.position,
            "recording_id": rec.recording_id,
            "sample_rate_hz": rec.sample_rate,
        })
    manifest = {
        "schema_version": corpus.schema_version,
        "recordings": entries,
        "warnings": corpus.warnings,
    }
    manifest_path = out / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest_path


# -- synthetic corpus ---------------------------------------------------------------

@dataclass(frozen=True)
class PositionSpec:
    """Per-position distortion of the shared latent gait."""

    phase_jitter: float = 0.01      # max time offset, seconds
    amplitude_scale: float = 1.0
    noise_snr_db: float = 20.0


@dataclass(frozen=True)
class SyntheticGaitSpec:
    base_period: float = 2.0        # seconds per full gait cycle
    n_cycles: int = 60
    per_position: tuple[tuple[str, PositionSpec], ...] = (
        ("chest", PositionSpec()),
        ("forearm", PositionSpec()),
        ("waist", PositionSpec()),
    )
    rng_seed: int = 0
    n_subjects: int = 2
    sample_rate: float = 50.0
    lead_s: float = 4.0             # pad so filter warm-up does not eat cycles

    def __post_init__(self) -> None:
        if self.base_period <= 0:
            raise ValueError("base_period must be positive")
        for _, ps in self.per_position:
            if not math.isfinite(ps.noise_snr_db) and ps.noise_snr_db != math.inf:
                raise ValueError("noise_snr_db must be finite or +inf")


def _smooth_noise(rng: np.random.Generator, n: int, ctrl_spacing: int) -> np.ndarray:
    """Piecewise-linear noise with control points every ctrl_spacing samples."""
    k = max(2, n // max(1, ctrl_spacing) + 2)
    ctrl = rng.standard_normal(k)
    xs = np.linspace(0.0, n - 1.0, k)
    return np.interp(np.arange(n), xs, ctrl)


def _latent_walk(rng: np.random.Generator, n: int, sample_rate: float,
                 base_period: float) -> np.ndarray:
    """Vertical motion of one walking body, m/s^2, zero mean.

    Step-rate harmonic dominates (left and right steps look alike), a weaker
    cycle-rate component carries the left/right asymmetry, and slowly drifting
    per-harmonic amplitude/phase plus per-step amplitude modulation provide the
    instantaneous variation that fingerprints are built from.
    """
    f0 = 1.0 / base_period
    t = np.arange(n) / sample_rate
    n_harm = int(rng.integers(3, 6))
    half_cycle_samples = max(2, int(round(sample_rate * base_period / 2.0)))

    base_amp = {1: 0.35, 2: 1.0, 3: 0.45, 4: 0.25, 5: 0.15}
    out = np.zeros(n)
    for h in range(1, n_harm + 1):
        amp = base_amp.get(h, 0.1) * (0.8 + 0.4 * rng.random())
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp_drift = 1.0 + 0.20 * _smooth_noise(rng, n, half_cycle_samples)
        phase_drift = 0.15 * _smooth_noise(rng, n, 2 * half_cycle_samples)
        out += amp * amp_drift * np.sin(2.0 * np.pi * h * f0 * t + phase + phase_drift)

    step_mod = 1.0 + 0.15 * _smooth_noise(rng, n, half_cycle_samples)
    return 2.0 * out * step_mod


def synthetic_vertical_signal(seed: int, n_cycles: int = 60,
                              base_period: float = 2.0,
                              sample_rate: float = 50.0,
                              snr_db: float = math.inf,
                              subject_id: str = "synth",
                              lead_s: float = 0.0) -> VerticalSignal:
    """One body's raw vertical acceleration (gravity excluded), for direct
    quantizer/segmentation studies that do not need the IMU front end."""
    rng = np.random.default_rng(seed)
    n = int(round((n_cycles * base_period + lead_s) * sample_rate))
    z = _latent_walk(rng, n, sample_rate, base_period)
    if math.isfinite(snr_db):
        sigma = math.sqrt(float(np.var(z)) / (10.0 ** (snr_db / 10.0)))
        z = z + rng.normal(0.0, sigma, size=n)
    return VerticalSignal(sample_rate=sample_rate, z=z, subject_id=subject_id)


def _random_quaternion(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def _world_to_device(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate world-frame rows v into the device frame defined by q (device->world)."""
    w, x, y, z = q
    conj = np.array([[w, -x, -y, -z]])
    from .signals import rotate_vectors
    return rotate_vectors(np.repeat(conj, v.shape[0], axis=0), v)


def generate_synthetic(spec: SyntheticGaitSpec) -> Corpus:
    """Deterministic synthetic corpus: one latent walk per subject, one
    distorted view of it per position.  Different subjects get independent
    latent walks, so inter-body fingerprints agree only by chance."""
    fs = spec.sample_rate
    duration = spec.n_cycles * spec.base_period + spec.lead_s
    n = int(round(duration * fs))
    jit_max = max((ps.phase_jitter for _, ps in spec.per_position), default=0.0)
    margin = int(math.ceil(jit_max * fs)) + 1

    records = []
    for s_idx in range(spec.n_subjects):
        subject = f"s{s_idx:02d}"
        latent_rng = np.random.default_rng([spec.rng_seed, 7919, s_idx])
        latent = _latent_walk(latent_rng, n + 2 * margin, fs, spec.base_period)
        t = np.arange(n) / fs
        t_latent = (np.arange(n + 2 * margin) - margin) / fs

        for p_idx, (position, ps) in enumerate(spec.per_position):
            rec_rng = np.random.default_rng([spec.rng_seed, 104729, s_idx, p_idx])
            offset = rec_rng.uniform(-ps.phase_jitter, ps.phase_jitter) \
                if ps.phase_jitter > 0 else 0.0
            motion = ps.amplitude_scale * np.interp(t + offset, t_latent, latent)

            world = np.zeros((n, 3))
            world[:, 2] = GRAVITY + motion
            if math.isfinite(ps.noise_snr_db):
                sigma = math.sqrt(float(np.var(motion))
                                  / (10.0 ** (ps.noise_snr_db / 10.0)))
                world += rec_rng.normal(0.0, sigma, size=(n, 3))
                gyro = rec_rng.normal(0.0, 0.005, size=(n, 3))
            else:
                gyro = np.zeros((n, 3))

            pose = _random_quaternion(rec_rng)
            acc = _world_to_device(pose, world)
            records.append(ImuRecord(
                sample_rate=fs,
                t=t.copy(),
                acc=acc,
                gyro=gyro,
                subject_id=subject,
                position=position,
                recording_id="r0",
            ))
    return Corpus(records=records)


# -- sliding windows ------------------------------------------------------------------

@dataclass
class Window:
    """A run of consecutive gait cycles; only same-index windows are compared."""

    index: int
    start_cycle: int
    sequence: GaitSequence


def sliding_windows(sig: VerticalSignal, window_cycles: int,
                    overlap: float = 0.5, rho: int = 40,
                    detection: CycleDetection | None = None) -> list[Window]:
    """Cut a processed signal into half-overlapping runs of full gait cycles.

    Windows are aligned to detected half-cycle boundaries, so every window
    covers an integer number of half cycles.
    """
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    if window_cycles < 1:
        raise ValueError("window_cycles must be >= 1")
    det = detection if detection is not None else detect_cycles(sig)
    bounds = det.minima_indices
    total_cycles = (bounds.shape[0] - 1) // 2
    if total_cycles < window_cycles:
        raise SignalTooShort(
            f"{total_cycles} cycles available, window needs {window_cycles}")
    step = max(1, int(round(window_cycles * (1.0 - overlap))))
    windows = []
    index = 0
    start = 0
    while start + window_cycles <= total_cycles:
        lo = 2 * start
        hi = 2 * (start + window_cycles)
        sub_bounds = bounds[lo:hi + 1]
        seq = GaitSequence(
            cycles=cycles_from_bounds(sig.z, sub_bounds, rho),
            rho=rho,
            source_span=(int(sub_bounds[0]), int(sub_bounds[-1])),
            source_signal=sig,
            half_cycle_bounds=sub_bounds.copy(),
            origin_half_cycle=lo,
        )
        windows.append(Window(index=index, start_cycle=start, sequence=seq))
        index += 1
        start += step
    return windows

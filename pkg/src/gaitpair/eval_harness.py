"""Desk-scale evaluation: discriminability, reliability benefit, coherence,
randomness, and the rate-limit arithmetic of the pairing scheme.

All similarity statistics are recomputable from the raw pair lists emitted
alongside the summaries; nothing is aggregated away.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal as sps
from scipy.special import erfc, gammaincc

from .config import Config
from .dataset_io import Corpus, Window, sliding_windows
from .errors import (
    InsufficientBits,
    InsufficientPairs,
    MissingPosition,
    TooFewKeys,
)
from .fingerprint import quantize, average_cycle, reduce, reliability_order, similarity
from .gait import CycleDetection, detect_cycles
from .signals import (
    VerticalSignal,
    bandpass,
    extract_vertical,
    fuse_orientation,
    preprocess_record,
    resample_uniform,
)

RANDOMNESS_ALPHA = 0.001
SECONDS_PER_DAY = 86400


# -- report containers ----------------------------------------------------------------

@dataclass
class DistributionSummary:
    mean: float
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    n_outliers: int
    count: int

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DistributionSummary":
        v = np.asarray(values, dtype=float)
        q1, med, q3 = (float(x) for x in np.percentile(v, [25, 50, 75]))
        iqr = q3 - q1
        lo_lim, hi_lim = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = v[(v >= lo_lim) & (v <= hi_lim)]
        return cls(
            mean=float(np.mean(v)),
            median=med,
            q1=q1,
            q3=q3,
            whisker_lo=float(inside.min()) if inside.size else float(v.min()),
            whisker_hi=float(inside.max()) if inside.size else float(v.max()),
            n_outliers=int(v.size - inside.size),
            count=int(v.size),
        )


@dataclass
class PairSimilarity:
    subject_a: str
    position_a: str
    subject_b: str
    position_b: str
    window: int
    value: float


@dataclass
class SimilarityReport:
    intra: DistributionSummary
    inter: dict[str, DistributionSummary]
    collision_rate_above_threshold: float
    threshold: float
    intra_pairs: list[PairSimilarity] = field(repr=False, default_factory=list)
    inter_pairs: list[PairSimilarity] = field(repr=False, default_factory=list)
    # inter-body pairs above threshold, with per-side bit-entropy estimates:
    # collisions concentrate in low-entropy fingerprints
    collisions: list[dict] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "intra": asdict(self.intra),
            "inter": {k: asdict(v) for k, v in self.inter.items()},
            "collision_rate_above_threshold": self.collision_rate_above_threshold,
            "threshold": self.threshold,
            "n_intra": len(self.intra_pairs),
            "n_inter": len(self.inter_pairs),
            "collisions": self.collisions,
        }


@dataclass
class SweepEntry:
    M: int
    extra_bits: int
    summary: DistributionSummary
    pairs: list[PairSimilarity] = field(repr=False, default_factory=list)


@dataclass
class SweepReport:
    N: int
    entries: list[SweepEntry]

    def mean_by_extra(self) -> dict[int, float]:
        return {e.extra_bits: e.summary.mean for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "entries": [
                {"M": e.M, "extra_bits": e.extra_bits, "summary": asdict(e.summary)}
                for e in self.entries
            ],
        }


@dataclass
class CoherenceReport:
    freqs: np.ndarray
    mean_same_subject: np.ndarray
    mean_different_subject: np.ndarray
    n_same_pairs: int
    n_diff_pairs: int
    low_band_hz: float = 0.5
    low_band_elevated: bool = False

    def to_dict(self) -> dict:
        return {
            "freqs": self.freqs.tolist(),
            "mean_same_subject": self.mean_same_subject.tolist(),
            "mean_different_subject": self.mean_different_subject.tolist(),
            "n_same_pairs": self.n_same_pairs,
            "n_diff_pairs": self.n_diff_pairs,
            "low_band_hz": self.low_band_hz,
            "low_band_elevated": self.low_band_elevated,
        }


@dataclass
class PositionTable:
    positions: list[str]
    matrix: np.ndarray
    n_values: np.ndarray

    def to_dict(self) -> dict:
        return {
            "positions": self.positions,
            "matrix": self.matrix.tolist(),
            "n_values": self.n_values.tolist(),
        }


@dataclass
class RandomnessReport:
    n_bits: int
    alpha: float
    p_values: dict[str, float]
    details: dict[str, float]
    passed: bool
    failures: list[str]

    def to_dict(self) -> dict:
        return {
            "n_bits": self.n_bits,
            "alpha": self.alpha,
            "p_values": self.p_values,
            "details": self.details,
            "passed": self.passed,
            "failures": self.failures,
        }


# -- pipeline helpers --------------------------------------------------------------------

RecordKey = tuple[str, str, str]  # subject, position, recording


def _preprocess_corpus(corpus: Corpus, cfg: Config, jobs: int = 1
                       ) -> dict[RecordKey, tuple[VerticalSignal, CycleDetection]]:
    """Run the signal pipeline plus cycle detection once per record."""
    def work(rec):
        sig = preprocess_record(rec, band=cfg.band)
        return (rec.subject_id, rec.position, rec.recording_id), (sig, detect_cycles(sig))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return dict(pool.map(work, corpus.records))
    return dict(work(rec) for rec in corpus.records)


def _windows_by_key(processed, cfg: Config, window_cycles: int
                    ) -> dict[RecordKey, list[Window]]:
    out: dict[RecordKey, list[Window]] = {}
    for key, (sig, det) in processed.items():
        total = (det.minima_indices.shape[0] - 1) // 2
        if total < window_cycles:
            out[key] = []
            continue
        out[key] = sliding_windows(sig, window_cycles, overlap=0.5,
                                   rho=cfg.rho, detection=det)
    return out


def _reduced_bits(window: Window, cfg: Config, N: int,
                  order=None) -> tuple[np.ndarray, object]:
    fp = quantize(window.sequence, average_cycle(window.sequence), cfg.bits_per_cycle)
    own_order = reliability_order(fp)
    applied = order if order is not None else own_order
    return reduce(fp, applied, N).bits, own_order


def _intra_pairs(windows_by_key, subjects_positions, cfg: Config, N: int
                 ) -> list[PairSimilarity]:
    """Same subject+recording, different positions, same window index.

    The reliability ordering of the lexicographically first position is
    applied to both sides, mirroring the protocol's winner-order rule
    deterministically.
    """
    pairs: list[PairSimilarity] = []
    for (subject, recording), positions in subjects_positions.items():
        for i in range(len(positions)):
            for j in range(i + 1, len(positions)):
                pa, pb = positions[i], positions[j]
                wins_a = windows_by_key.get((subject, pa, recording), [])
                wins_b = windows_by_key.get((subject, pb, recording), [])
                for wa, wb in zip(wins_a, wins_b):
                    fp_a = quantize(wa.sequence, average_cycle(wa.sequence),
                                    cfg.bits_per_cycle)
                    fp_b = quantize(wb.sequence, average_cycle(wb.sequence),
                                    cfg.bits_per_cycle)
                    order = reliability_order(fp_a)
                    sim = similarity(reduce(fp_a, order, N), reduce(fp_b, order, N))
                    pairs.append(PairSimilarity(subject, pa, subject, pb,
                                                wa.index, sim))
    return pairs


def _group_positions(processed) -> dict[tuple[str, str], list[str]]:
    groups: dict[tuple[str, str], list[str]] = {}
    for subject, position, recording in processed:
        groups.setdefault((subject, recording), []).append(position)
    for v in groups.values():
        v.sort()
    return groups


# -- analyses ---------------------------------------------------------------------------

def coherence_analysis(corpus: Corpus, cfg: Config | None = None,
                       jobs: int = 1) -> CoherenceReport:
    """Welch-averaged magnitude-squared coherence of orientation-corrected
    vertical signals: simultaneous same-body pairs against cross-body pairs.

    Uses the unfiltered vertical signal; the report flags whether cross-body
    coherence is elevated below 0.5 Hz, the band the bandpass later removes.
    """
    cfg = cfg or Config()
    verticals: dict[RecordKey, VerticalSignal] = {}
    for rec in corpus.records:
        rec2 = resample_uniform(rec)
        ori = fuse_orientation(rec2)
        verticals[(rec.subject_id, rec.position, rec.recording_id)] = \
            extract_vertical(rec2, ori)

    keys = sorted(verticals)
    same_pairs = [(a, b) for i, a in enumerate(keys) for b in keys[i + 1:]
                  if a[0] == b[0] and a[2] == b[2] and a[1] != b[1]]
    diff_pairs = [(a, b) for i, a in enumerate(keys) for b in keys[i + 1:]
                  if a[0] != b[0] and a[1] == b[1]]
    if not same_pairs:
        raise InsufficientPairs("need >= 2 simultaneous same-subject recordings")
    if not diff_pairs:
        raise InsufficientPairs("need recordings from >= 2 subjects")

    def msc(a: RecordKey, b: RecordKey) -> tuple[np.ndarray, np.ndarray]:
        za, zb = verticals[a].z, verticals[b].z
        n = min(za.shape[0], zb.shape[0])
        # 8 Hann segments at 50% overlap
        nperseg = max(8, int(n / 4.5))
        return sps.coherence(za[:n] - za[:n].mean(), zb[:n] - zb[:n].mean(),
                             fs=verticals[a].sample_rate, window="hann",
                             nperseg=nperseg, noverlap=nperseg // 2)

    def averaged(pair_list):
        acc = None
        freqs = None
        for a, b in pair_list:
            f, c = msc(a, b)
            if acc is None:
                acc, freqs = c.copy(), f
            else:
                n = min(acc.shape[0], c.shape[0])
                acc, freqs, c = acc[:n], freqs[:n], c[:n]
                acc += c
        return freqs, acc / len(pair_list)

    freqs_s, mean_same = averaged(same_pairs)
    freqs_d, mean_diff = averaged(diff_pairs)
    n = min(freqs_s.shape[0], freqs_d.shape[0])
    freqs, mean_same, mean_diff = freqs_s[:n], mean_same[:n], mean_diff[:n]

    low = freqs < 0.5
    high = (freqs >= 0.5) & (freqs <= 12.0)
    elevated = bool(low.any() and high.any()
                    and mean_diff[low].mean() > mean_diff[high].mean())
    return CoherenceReport(
        freqs=freqs,
        mean_same_subject=mean_same,
        mean_different_subject=mean_diff,
        n_same_pairs=len(same_pairs),
        n_diff_pairs=len(diff_pairs),
        low_band_elevated=elevated,
    )


def reliability_sweep(corpus: Corpus, N: int = 128,
                      extra_bits: tuple[int, ...] = (0, 16, 32, 48, 64, 128),
                      cfg: Config | None = None, jobs: int = 1) -> SweepReport:
    """Mean intra-body similarity for fingerprint sizes M = N + extra, all
    reduced with cutoff N: how much discarding unreliable bits buys."""
    cfg = cfg or Config()
    b = cfg.bits_per_cycle
    for extra in extra_bits:
        if (N + extra) % b != 0:
            raise InsufficientBits(f"M={N + extra} not divisible by b={b}")
    processed = _preprocess_corpus(corpus, cfg, jobs)
    groups = _group_positions(processed)

    entries = []
    for extra in sorted(extra_bits):
        m_total = N + extra
        windows = _windows_by_key(processed, cfg, m_total // b)
        pairs = _intra_pairs(windows, groups, cfg, N)
        if not pairs:
            raise InsufficientBits(
                f"no intra-body window pairs at M={m_total}: corpus too short")
        values = np.array([p.value for p in pairs])
        entries.append(SweepEntry(M=m_total, extra_bits=extra,
                                  summary=DistributionSummary.from_values(values),
                                  pairs=pairs))
    return SweepReport(N=N, entries=entries)


def discriminability(corpus: Corpus, M: int | None = None, N: int | None = None,
                     cfg: Config | None = None, jobs: int = 1) -> SimilarityReport:
    """Intra-body versus inter-body similarity distributions.

    Intra: every position pair within each subject, same window index.
    Inter: same position across different subjects, same window index.
    The collision rate counts inter-body similarities above the pairing
    threshold.
    """
    cfg = cfg or Config()
    M = M if M is not None else cfg.fingerprint_bits
    N = N if N is not None else cfg.cutoff
    b = cfg.bits_per_cycle
    if M % b != 0:
        raise InsufficientBits(f"M={M} not divisible by b={b}")
    processed = _preprocess_corpus(corpus, cfg, jobs)
    groups = _group_positions(processed)
    windows = _windows_by_key(processed, cfg, M // b)

    intra = _intra_pairs(windows, groups, cfg, N)

    reduced: dict[RecordKey, list[tuple[int, np.ndarray]]] = {}
    for key, wins in windows.items():
        lst = []
        for w in wins:
            bits, _ = _reduced_bits(w, cfg, N)
            lst.append((w.index, bits))
        reduced[key] = lst

    inter: list[PairSimilarity] = []
    keys = sorted(reduced)
    for i, ka in enumerate(keys):
        for kb in keys[i + 1:]:
            if ka[0] == kb[0] or ka[1] != kb[1]:
                continue
            bits_b = dict(reduced[kb])
            for w_idx, bits_a in reduced[ka]:
                if w_idx not in bits_b:
                    continue
                agree = 1.0 - float(np.count_nonzero(
                    bits_a != bits_b[w_idx])) / N
                inter.append(PairSimilarity(ka[0], ka[1], kb[0], kb[1],
                                            w_idx, agree))

    if not intra:
        raise InsufficientPairs("no intra-body pairs (need >= 2 positions)")
    if not inter:
        raise InsufficientPairs("no inter-body pairs (need >= 2 subjects)")

    inter_by_pos: dict[str, list[float]] = {}
    for p in inter:
        inter_by_pos.setdefault(p.position_a, []).append(p.value)
    inter_values = np.array([p.value for p in inter])
    collision = float(np.mean(inter_values > cfg.threshold))

    return SimilarityReport(
        intra=DistributionSummary.from_values(np.array([p.value for p in intra])),
        inter={pos: DistributionSummary.from_values(np.array(vals))
               for pos, vals in sorted(inter_by_pos.items())},
        collision_rate_above_threshold=collision,
        threshold=cfg.threshold,
        intra_pairs=intra,
        inter_pairs=inter,
    )


def position_table(corpus: Corpus, M: int | None = None, N: int | None = None,
                   cfg: Config | None = None, jobs: int = 1,
                   required_positions: tuple[str, ...] | None = None
                   ) -> PositionTable:
    """Symmetric matrix of mean intra-body similarity per position pair."""
    cfg = cfg or Config()
    M = M if M is not None else cfg.fingerprint_bits
    N = N if N is not None else cfg.cutoff
    positions = sorted(corpus.positions)
    if required_positions:
        missing = [p for p in required_positions if p not in positions]
        if missing:
            raise MissingPosition(f"corpus lacks positions {missing}")
        positions = sorted(required_positions)

    processed = _preprocess_corpus(corpus, cfg, jobs)
    groups = _group_positions(processed)
    windows = _windows_by_key(processed, cfg, M // cfg.bits_per_cycle)
    pairs = _intra_pairs(windows, groups, cfg, N)
    if not pairs:
        raise InsufficientPairs("no intra-body pairs for the position table")

    k = len(positions)
    index = {p: i for i, p in enumerate(positions)}
    sums = np.zeros((k, k))
    counts = np.zeros((k, k), dtype=int)
    for p in pairs:
        if p.position_a not in index or p.position_b not in index:
            continue
        i, j = index[p.position_a], index[p.position_b]
        sums[i, j] += p.value
        sums[j, i] += p.value
        counts[i, j] += 1
        counts[j, i] += 1
    with np.errstate(invalid="ignore"):
        matrix = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    np.fill_diagonal(matrix, 1.0)
    np.fill_diagonal(counts, 0)
    return PositionTable(positions=positions, matrix=matrix, n_values=counts)


# -- randomness tests ---------------------------------------------------------------------

def _monobit_p(bits: np.ndarray) -> float:
    n = bits.size
    s = abs(float(np.sum(2.0 * bits - 1.0)))
    return float(erfc(s / math.sqrt(n) / math.sqrt(2.0)))


def _block_frequency_p(bits: np.ndarray, m: int = 128) -> float:
    n_blocks = bits.size // m
    if n_blocks < 1:
        return float("nan")
    trimmed = bits[: n_blocks * m].reshape(n_blocks, m)
    pi = trimmed.mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def _runs_p(bits: np.ndarray) -> float:
    n = bits.size
    pi = float(bits.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(np.diff(bits)))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(erfc(num / den))


_LONGEST_RUN_TABLES = (
    # (min_n, block_size, categories, probabilities)
    (750000, 10000, (10, 11, 12, 13, 14, 15, 16),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6272, 128, (4, 5, 6, 7, 8, 9),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 2, 3, 4),
     (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_one_run(block: np.ndarray) -> int:
    if not block.any():
        return 0
    padded = np.concatenate([[0], block, [0]])
    edges = np.flatnonzero(np.diff(padded))
    return int(np.max(edges[1::2] - edges[::2]))


def _longest_run_p(bits: np.ndarray) -> float:
    n = bits.size
    for min_n, m, cats, probs in _LONGEST_RUN_TABLES:
        if n >= min_n:
            break
    else:
        return float("nan")
    n_blocks = n // m
    counts = np.zeros(len(cats), dtype=int)
    blocks = bits[: n_blocks * m].reshape(n_blocks, m)
    for block in blocks:
        run = _longest_one_run(block)
        run = min(max(run, cats[0]), cats[-1])
        counts[cats.index(run)] += 1
    expected = n_blocks * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc((len(cats) - 1) / 2.0, chi2 / 2.0))


def _psi_sq(bits: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    n = bits.size
    aug = np.concatenate([bits, bits[: m - 1]]) if m > 1 else bits
    vals = np.zeros(n, dtype=np.int64)
    for j in range(m):
        vals = (vals << 1) | aug[j: j + n]
    counts = np.bincount(vals, minlength=1 << m)
    return float((1 << m) / n * np.sum(counts.astype(float) ** 2) - n)


def _serial_p(bits: np.ndarray, m: int = 3) -> tuple[float, float]:
    psi_m = _psi_sq(bits, m)
    psi_m1 = _psi_sq(bits, m - 1)
    psi_m2 = _psi_sq(bits, m - 2)
    d1 = psi_m - psi_m1
    d2 = psi_m - 2.0 * psi_m1 + psi_m2
    p1 = float(gammaincc(2 ** (m - 2), d1 / 2.0))
    p2 = float(gammaincc(2 ** (m - 3), d2 / 2.0))
    return p1, p2


def _phi(bits: np.ndarray, m: int) -> float:
    n = bits.size
    aug = np.concatenate([bits, bits[: m - 1]]) if m > 1 else bits
    vals = np.zeros(n, dtype=np.int64)
    for j in range(m):
        vals = (vals << 1) | aug[j: j + n]
    counts = np.bincount(vals, minlength=1 << m).astype(float)
    probs = counts[counts > 0] / n
    return float(np.sum(probs * np.log(probs)))


def _approximate_entropy_p(bits: np.ndarray, m: int = 2) -> float:
    n = bits.size
    apen = _phi(bits, m) - _phi(bits, m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def fingerprint_keys(corpus: Corpus, cfg: Config | None = None,
                     jobs: int = 1) -> list:
    """Reduced fingerprint of every window: the key corpus for bias testing."""
    cfg = cfg or Config()
    processed = _preprocess_corpus(corpus, cfg, jobs)
    windows = _windows_by_key(processed, cfg, cfg.cycles_per_fingerprint)
    keys = []
    for wins in windows.values():
        for w in wins:
            fp = quantize(w.sequence, average_cycle(w.sequence),
                          cfg.bits_per_cycle)
            keys.append(reduce(fp, reliability_order(fp), cfg.cutoff))
    return keys


def randomness_suite(keys, alpha: float = RANDOMNESS_ALPHA) -> RandomnessReport:
    """Six frequency/pattern tests over the pooled key bitstream.

    ``keys`` may be FuzzyKey objects, reduced fingerprints, or raw bit arrays.
    The suite fails if any test's p-value on the pooled stream drops below
    ``alpha``.
    """
    if len(keys) < 100:
        raise TooFewKeys(f"need >= 100 keys, got {len(keys)}")
    arrays = []
    for k in keys:
        bits = getattr(k, "key_bits", None)
        if bits is None:
            bits = getattr(k, "bits", k)
        arrays.append(np.asarray(bits).astype(np.uint8).ravel())
    pooled = np.concatenate(arrays)

    serial_p1, serial_p2 = _serial_p(pooled)
    p_values = {
        "monobit_frequency": _monobit_p(pooled),
        "block_frequency": _block_frequency_p(pooled),
        "runs": _runs_p(pooled),
        "longest_run": _longest_run_p(pooled),
        "serial": min(serial_p1, serial_p2),
        "approximate_entropy": _approximate_entropy_p(pooled),
    }
    failures = [name for name, p in p_values.items()
                if not math.isnan(p) and p < alpha]
    return RandomnessReport(
        n_bits=int(pooled.size),
        alpha=alpha,
        p_values=p_values,
        details={"serial_p1": serial_p1, "serial_p2": serial_p2},
        passed=not failures,
        failures=failures,
    )


# -- security arithmetic ---------------------------------------------------------------

def security_arithmetic(session_seconds: float, threshold: float, N: int) -> dict:
    """Attempt budget per day and the implied error-correction capacity.

    An attacker bound to full sessions gets floor(86400 / session length)
    tries per day; the code corrects up to floor(N * (1 - threshold)) bits.
    """
    if session_seconds <= 0:
        raise ValueError("session_seconds must be positive")
    tries = int(SECONDS_PER_DAY // session_seconds)
    t = int(math.floor(N * (1.0 - threshold) + 1e-9))
    return {"tries_per_day": tries, "t": t}

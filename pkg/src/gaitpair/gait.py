"""Segment a vertical acceleration signal into length-normalized gait cycles.

Walking is periodic at the step level: the autocorrelation of the bandpassed
vertical signal peaks once per step.  Those peak lags anchor a search for the
signal minima that separate steps (half cycles); two consecutive half cycles
form one full gait cycle, which is then resampled to a fixed length so cycles
are comparable across devices and walking speeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import CycleTooShort, NoPeriodicity, TooFewMaxima, ZeroVariance
from .signals import VerticalSignal


@dataclass
class CycleDetection:
    """Intermediate artifacts of cycle detection.

    acorr           normalized autocorrelation, lag 0..n-1
    maxima_indices  lags of the selected autocorrelation maxima (one per step)
    delta_mean      estimated half-cycle (step) length in samples
    minima_indices  indices into the signal separating half cycles
    search_slack    slack applied around each maximum when locating minima
    """

    acorr: np.ndarray = field(repr=False)
    maxima_indices: np.ndarray
    delta_mean: int
    minima_indices: np.ndarray
    search_slack: int


@dataclass
class GaitSequence:
    """q contiguous full gait cycles, each resampled to rho samples.

    Provenance (the source signal and the half-cycle boundaries it was cut at)
    is retained so a sequence can be re-segmented at a shifted origin.
    """

    cycles: np.ndarray = field(repr=False)  # shape (q, rho)
    rho: int = 0
    source_span: tuple[int, int] = (0, 0)
    source_signal: VerticalSignal | None = field(default=None, repr=False)
    half_cycle_bounds: np.ndarray | None = field(default=None, repr=False)
    origin_half_cycle: int = 0

    @property
    def q(self) -> int:
        return int(self.cycles.shape[0])


def autocorrelate(sig: VerticalSignal) -> np.ndarray:
    """Normalized discrete autocorrelation a_k = sum_t z[t+k] z[t] / ((n-k) var).

    For a mean-free signal a_0 is 1.  The (n-k) normalization keeps the scale
    lag-independent but inflates estimator noise at large lags, so callers
    should not trust the far tail.
    """
    z = np.asarray(sig.z, dtype=float)
    n = z.shape[0]
    if n < 4:
        raise ValueError(f"autocorrelation needs >= 4 samples, got {n}")
    var = float(np.var(z))
    scale = float(np.max(np.abs(z))) if n else 0.0
    if var <= 1e-12 * max(scale * scale, 1e-12):
        raise ZeroVariance("signal variance is zero (constant input)")
    raw = sps.correlate(z, z, mode="full", method="fft")[n - 1:]
    denom = (n - np.arange(n)) * var
    return raw / denom


def detect_cycles(sig: VerticalSignal, tau_search: int | None = None,
                  min_prominence: float = 0.1) -> CycleDetection:
    """Locate half-cycle boundaries via autocorrelation-guided minima selection.

    Steps:
      1. autocorrelate and pick non-ambiguous maxima: peak prominence at least
         ``min_prominence`` and inter-peak distance at least half the lag of
         the first significant peak (suppresses intra-cycle wiggle maxima);
      2. delta_mean = ceil(mean spacing of the maxima) estimates the step
         length in samples;
      3. around each maximum lag, take the signal argmin over
         [zeta_i - tau, zeta_i + delta_mean + tau] as a half-cycle boundary.

    ``tau_search`` defaults to ceil(0.1 * delta_mean).
    """
    if tau_search is not None and tau_search < 0:
        raise ValueError("tau_search must be >= 0")
    acorr = autocorrelate(sig)
    z = sig.z
    n = z.shape[0]

    # assess periodicity on the near field only: beyond n/2 the (n-k)
    # normalization leaves too few product terms and noise alone crosses any
    # fixed prominence floor
    near = acorr[: max(4, n // 2)]
    if float(np.max(near[1:])) < min_prominence:
        raise NoPeriodicity(
            f"no off-zero autocorrelation above {min_prominence}")
    first_peaks, _ = sps.find_peaks(near[1:], prominence=min_prominence)
    if first_peaks.size == 0:
        raise NoPeriodicity("no prominent autocorrelation peak found")
    delta_rough = int(first_peaks[0]) + 1

    # the far tail has too few product terms for the peak estimate to matter;
    # keep one rough period of headroom for the minima search window
    lag_cap = max(2, n - delta_rough)
    peaks, _ = sps.find_peaks(acorr[:lag_cap], prominence=min_prominence,
                              distance=max(1, delta_rough // 2))
    peaks = peaks[peaks > 0]
    m = peaks.size
    if m < 3:
        raise TooFewMaxima(f"need >= 3 autocorrelation maxima, found {m}")

    spacing = np.diff(peaks)
    delta_mean = int(math.ceil(float(np.sum(spacing)) / (m - 1)))
    tau = tau_search if tau_search is not None else int(math.ceil(0.1 * delta_mean))

    # consecutive search windows overlap; forcing each search to start past
    # the previous pick keeps one boundary per step instead of letting a deep
    # neighboring minimum win twice
    minima: list[int] = []
    min_gap = max(1, delta_mean // 2)
    for zeta in peaks[:-1]:
        lo = max(0, int(zeta) - tau)
        hi = min(n - 1, int(zeta) + delta_mean + tau)
        if minima:
            lo = max(lo, minima[-1] + min_gap)
        if lo > hi:
            continue
        idx = lo + int(np.argmin(z[lo:hi + 1]))
        if not minima or idx > minima[-1]:
            minima.append(idx)

    return CycleDetection(
        acorr=acorr,
        maxima_indices=peaks.astype(int),
        delta_mean=delta_mean,
        minima_indices=np.asarray(minima, dtype=int),
        search_slack=int(tau),
    )


def resample_cycle(raw: np.ndarray, rho: int) -> np.ndarray:
    """Fourier-resample one raw cycle to exactly rho samples."""
    if raw.shape[0] < 4:
        raise CycleTooShort(f"raw cycle of {raw.shape[0]} samples")
    if raw.shape[0] == rho:
        return np.asarray(raw, dtype=float).copy()
    return sps.resample(np.asarray(raw, dtype=float), rho)


def cycles_from_bounds(z: np.ndarray, bounds: np.ndarray, rho: int) -> np.ndarray:
    """Cut full cycles between every second boundary and normalize their length."""
    q = (bounds.shape[0] - 1) // 2
    out = np.empty((q, rho), dtype=float)
    for i in range(q):
        start, end = int(bounds[2 * i]), int(bounds[2 * i + 2])
        out[i] = resample_cycle(z[start:end], rho)
    return out


def split_and_normalize(sig: VerticalSignal, det: CycleDetection,
                        rho: int) -> GaitSequence:
    """Cut the signal into full cycles and resample each to rho samples.

    A full cycle spans two consecutive half-cycle boundaries pairs, so
    q = floor((len(minima) - 1) / 2); a trailing odd half cycle is dropped.
    """
    if rho < 2:
        raise ValueError("rho must be >= 2")
    bounds = det.minima_indices
    if bounds.shape[0] < 3:
        raise TooFewMaxima(
            f"need >= 3 half-cycle boundaries, got {bounds.shape[0]}")
    q = (bounds.shape[0] - 1) // 2
    cycles = cycles_from_bounds(sig.z, bounds, rho)
    return GaitSequence(
        cycles=cycles,
        rho=rho,
        source_span=(int(bounds[0]), int(bounds[2 * q])),
        source_signal=sig,
        half_cycle_bounds=bounds.copy(),
        origin_half_cycle=0,
    )

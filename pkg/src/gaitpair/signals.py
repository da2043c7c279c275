"""Raw IMU streams -> orientation-normalized, band-limited vertical acceleration.

The chain is: gradient-descent orientation fusion of accelerometer + gyroscope
(no magnetometer, so heading stays unconstrained), rotation of the acceleration
into the world frame keeping only the component opposing gravity, then a
zero-phase Type-II Chebyshev bandpass to strip DC/drift below the step band and
sensor noise above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import (
    EmptyStream,
    InvalidBand,
    LengthMismatch,
    NonFiniteSample,
    UnstableFilter,
)

GRAVITY = 9.81  # m/s^2, nominal

POSITIONS = ("chest", "forearm", "head", "shin", "thigh", "upperarm", "waist", "other")

#: Default gradient gain for the orientation filter.  Standard published value
#: for ~50 Hz fusion; convergence, not accuracy, is what downstream relies on.
DEFAULT_FUSION_GAIN = 0.1

#: Seconds of filtered output discarded before gait detection: orientation
#: convergence plus filter warm-up corrupt the leading samples.
TRANSIENT_DISCARD_S = 2.0


# -- domain types ---------------------------------------------------------------

@dataclass
class ImuRecord:
    """Timestamped tri-axial accelerometer + gyroscope stream.

    t     seconds, strictly increasing, shape (n,)
    acc   m/s^2, shape (n, 3)
    gyro  rad/s, shape (n, 3)
    """

    sample_rate: float
    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray
    subject_id: str = ""
    position: str = "other"
    recording_id: str = "0"

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float)
        self.gyro = np.asarray(self.gyro, dtype=float)

    def validate(self) -> None:
        n = self.t.shape[0]
        if n < 2:
            raise EmptyStream(f"record needs >= 2 samples, got {n}")
        if self.acc.shape != (n, 3) or self.gyro.shape != (n, 3):
            raise LengthMismatch("acc/gyro shapes do not match timestamps")
        if not (np.isfinite(self.acc).all() and np.isfinite(self.gyro).all()
                and np.isfinite(self.t).all()):
            raise NonFiniteSample(f"non-finite sample in record {self.recording_id!r}")
        dt = np.diff(self.t)
        if (dt <= 0).any():
            raise EmptyStream("timestamps must be strictly increasing")
        if self.sample_rate <= 0:
            raise EmptyStream("sample_rate must be positive")
        implied = 1.0 / float(np.mean(dt))
        if abs(implied - self.sample_rate) > 0.1 * self.sample_rate:
            raise EmptyStream(
                f"sample_rate {self.sample_rate:.3f} Hz inconsistent with "
                f"timestamp spacing ({implied:.3f} Hz)")

    @property
    def n_samples(self) -> int:
        return int(self.t.shape[0])

    def is_uniform(self, rel_tol: float = 1e-6) -> bool:
        dt = np.diff(self.t)
        return bool(np.allclose(dt, dt[0], rtol=rel_tol, atol=1e-12))


@dataclass
class VerticalSignal:
    """Gravity-aligned acceleration amplitudes, one value per sample."""

    sample_rate: float
    z: np.ndarray
    subject_id: str = ""
    position: str = "other"
    recording_id: str = "0"

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=float)

    @property
    def n_samples(self) -> int:
        return int(self.z.shape[0])


@dataclass
class Orientation:
    """Per-sample unit quaternions, scalar first, shape (n, 4)."""

    q: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)

    @property
    def n_samples(self) -> int:
        return int(self.q.shape[0])


# -- orientation fusion -----------------------------------------------------------

def _initial_quaternion(acc: np.ndarray) -> tuple[float, float, float, float]:
    """Quaternion rotating the first accelerometer reading onto world +z.

    Anchors the filter at the measured tilt so convergence does not have to
    walk across a large initial error; heading is left at zero.
    """
    norm = math.sqrt(float(acc[0] ** 2 + acc[1] ** 2 + acc[2] ** 2))
    if norm < 1e-9:
        return 1.0, 0.0, 0.0, 0.0
    ax, ay, az = (float(v) / norm for v in acc)
    # axis = a x e_z, angle between a and e_z
    cx, cy = ay, -ax
    s = math.sqrt(cx * cx + cy * cy)
    c = az
    if s < 1e-12:
        if c > 0.0:
            return 1.0, 0.0, 0.0, 0.0
        return 0.0, 1.0, 0.0, 0.0  # flipped: 180 deg about x
    angle = math.atan2(s, c)
    half = 0.5 * angle
    k = math.sin(half) / s
    return math.cos(half), cx * k, cy * k, 0.0


def fuse_orientation(rec: ImuRecord, gain: float = DEFAULT_FUSION_GAIN) -> Orientation:
    """Estimate per-sample device orientation from accelerometer + gyroscope.

    Gradient-descent fusion: the gyroscope propagates the quaternion while the
    accelerometer pulls the estimate toward the pose whose world z-axis opposes
    gravity.  Only the z-axis is meaningful afterwards; the horizontal axes are
    unconstrained because no second fixed reference direction is available.

    Returns quaternions q (scalar first) such that ``q * v_device * q^-1``
    expresses a device-frame vector in the world frame.
    """
    rec.validate()
    if gain <= 0:
        raise ValueError("gain must be positive")

    n = rec.n_samples
    out = np.empty((n, 4), dtype=float)
    q0, q1, q2, q3 = _initial_quaternion(rec.acc[0])
    out[0] = (q0, q1, q2, q3)

    t = rec.t
    acc = rec.acc
    gyro = rec.gyro
    for i in range(1, n):
        dt = float(t[i] - t[i - 1])
        gx, gy, gz = float(gyro[i, 0]), float(gyro[i, 1]), float(gyro[i, 2])
        ax, ay, az = float(acc[i, 0]), float(acc[i, 1]), float(acc[i, 2])

        # quaternion rate from angular velocity
        qd0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz)
        qd1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy)
        qd2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx)
        qd3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx)

        norm = math.sqrt(ax * ax + ay * ay + az * az)
        if norm > 1e-9:
            ax /= norm
            ay /= norm
            az /= norm
            # objective: predicted gravity direction in device frame minus measurement
            f1 = 2.0 * (q1 * q3 - q0 * q2) - ax
            f2 = 2.0 * (q0 * q1 + q2 * q3) - ay
            f3 = 1.0 - 2.0 * (q1 * q1 + q2 * q2) - az
            s0 = -2.0 * q2 * f1 + 2.0 * q1 * f2
            s1 = 2.0 * q3 * f1 + 2.0 * q0 * f2 - 4.0 * q1 * f3
            s2 = -2.0 * q0 * f1 + 2.0 * q3 * f2 - 4.0 * q2 * f3
            s3 = 2.0 * q1 * f1 + 2.0 * q2 * f2
            snorm = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
            if snorm > 1e-12:
                qd0 -= gain * s0 / snorm
                qd1 -= gain * s1 / snorm
                qd2 -= gain * s2 / snorm
                qd3 -= gain * s3 / snorm

        q0 += qd0 * dt
        q1 += qd1 * dt
        q2 += qd2 * dt
        q3 += qd3 * dt
        qn = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
        q0 /= qn
        q1 /= qn
        q2 /= qn
        q3 /= qn
        out[i] = (q0, q1, q2, q3)

    return Orientation(out)


def rotate_vectors(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate row vectors v (n, 3) by quaternions q (n, 4), scalar first."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    vx, vy, vz = v[:, 0], v[:, 1], v[:, 2]
    rx = ((1 - 2 * (y * y + z * z)) * vx
          + 2 * (x * y - w * z) * vy
          + 2 * (x * z + w * y) * vz)
    ry = (2 * (x * y + w * z) * vx
          + (1 - 2 * (x * x + z * z)) * vy
          + 2 * (y * z - w * x) * vz)
    rz = (2 * (x * z - w * y) * vx
          + 2 * (y * z + w * x) * vy
          + (1 - 2 * (x * x + y * y)) * vz)
    return np.stack([rx, ry, rz], axis=1)


def extract_vertical(rec: ImuRecord, ori: Orientation) -> VerticalSignal:
    """World-frame z component of the acceleration, sample for sample."""
    if ori.n_samples != rec.n_samples:
        raise LengthMismatch(
            f"orientation has {ori.n_samples} samples, record {rec.n_samples}")
    world = rotate_vectors(ori.q, rec.acc)
    return VerticalSignal(
        sample_rate=rec.sample_rate,
        z=world[:, 2],
        subject_id=rec.subject_id,
        position=rec.position,
        recording_id=rec.recording_id,
    )


# -- bandpass ---------------------------------------------------------------------

def design_bandpass(sample_rate: float, lo: float, hi: float,
                    order: int = 4, stop_atten_db: float = 40.0) -> np.ndarray:
    """Second-order sections for a Type-II Chebyshev bandpass.

    Type II keeps the passband ripple-free and drops steeply at the corners,
    which is what the step band needs: everything below ``lo`` is correlated
    drift, everything above ``hi`` is not human motion.
    """
    nyq = sample_rate / 2.0
    if not 0.0 < lo < hi < nyq:
        raise InvalidBand(f"need 0 < lo < hi < {nyq} Hz, got ({lo}, {hi})")
    sos = sps.cheby2(order, stop_atten_db, [lo, hi], btype="bandpass",
                     fs=sample_rate, output="sos")
    # poles of each biquad must sit strictly inside the unit circle
    for section in sos:
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise UnstableFilter(
                f"pole magnitude {np.abs(poles).max():.6f} >= 1 for band ({lo}, {hi})")
    return sos


def bandpass(sig: VerticalSignal, lo: float = 0.5, hi: float = 12.0,
             order: int = 4, stop_atten_db: float = 40.0) -> VerticalSignal:
    """Zero-phase bandpass of the vertical signal.

    Filtering runs forward and backward so minima used for cycle splitting are
    not phase-shifted.  The input mean is removed before filtering; the
    stopband handles the rest of the sub-``lo`` content.  Output length equals
    input length.
    """
    sos = design_bandpass(sig.sample_rate, lo, hi, order, stop_atten_db)
    z = sig.z - float(np.mean(sig.z))
    filtered = sps.sosfiltfilt(sos, z)
    return VerticalSignal(
        sample_rate=sig.sample_rate,
        z=filtered,
        subject_id=sig.subject_id,
        position=sig.position,
        recording_id=sig.recording_id,
    )


# -- pipeline ---------------------------------------------------------------------

def resample_uniform(rec: ImuRecord) -> ImuRecord:
    """Linear-interpolate a record onto a uniform grid at its nominal rate."""
    rec.validate()
    if rec.is_uniform():
        return rec
    dt = 1.0 / rec.sample_rate
    n_out = int(math.floor((rec.t[-1] - rec.t[0]) / dt)) + 1
    grid = rec.t[0] + dt * np.arange(n_out)
    acc = np.stack([np.interp(grid, rec.t, rec.acc[:, i]) for i in range(3)], axis=1)
    gyro = np.stack([np.interp(grid, rec.t, rec.gyro[:, i]) for i in range(3)], axis=1)
    return ImuRecord(rec.sample_rate, grid, acc, gyro,
                     rec.subject_id, rec.position, rec.recording_id)


def preprocess_record(rec: ImuRecord, band: tuple[float, float] = (0.5, 12.0),
                      gain: float = DEFAULT_FUSION_GAIN,
                      discard_s: float = TRANSIENT_DISCARD_S) -> VerticalSignal:
    """Full preprocessing chain: fuse, extract vertical, bandpass, trim warm-up."""
    rec = resample_uniform(rec)
    ori = fuse_orientation(rec, gain=gain)
    vertical = extract_vertical(rec, ori)
    filtered = bandpass(vertical, band[0], band[1])
    skip = int(round(discard_s * rec.sample_rate))
    if skip >= filtered.n_samples:
        raise EmptyStream(
            f"record {rec.recording_id!r} shorter than the {discard_s}s warm-up")
    filtered.z = filtered.z[skip:]
    return filtered

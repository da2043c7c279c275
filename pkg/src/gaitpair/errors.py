"""Exception hierarchy shared across the toolkit.

Every error raised by the library derives from GaitPairError so callers can
catch broadly; the CLI maps subfamilies onto exit codes.
"""


class GaitPairError(Exception):
    """Base class for all library errors."""


# -- signal preprocessing ------------------------------------------------------

class EmptyStream(GaitPairError):
    """IMU record contains no (or too few) samples."""


class NonFiniteSample(GaitPairError):
    """NaN or infinity encountered in sensor data."""


class LengthMismatch(GaitPairError):
    """Paired inputs differ in length where equality is required."""


class InvalidBand(GaitPairError):
    """Bandpass corner frequencies are out of range for the sample rate."""


class UnstableFilter(GaitPairError):
    """Designed filter has a pole on or outside the unit circle."""


# -- gait segmentation ---------------------------------------------------------

class ZeroVariance(GaitPairError):
    """Signal is constant; autocorrelation is undefined."""


class TooFewMaxima(GaitPairError):
    """Not enough autocorrelation maxima to estimate the step period."""


class NoPeriodicity(GaitPairError):
    """No off-zero autocorrelation peak above the prominence floor."""


class CycleTooShort(GaitPairError):
    """A raw gait cycle has too few samples to resample."""


# -- fingerprinting ------------------------------------------------------------

class TooFewCycles(GaitPairError):
    """Averaging requires at least two gait cycles."""


class IndivisibleSegments(GaitPairError):
    """Bits-per-cycle does not divide the samples-per-cycle count."""


class CutoffTooLarge(GaitPairError):
    """Requested cutoff exceeds the fingerprint length."""


# -- error correction ----------------------------------------------------------

class DecodeFailure(GaitPairError):
    """No codeword within the correction radius of the input."""


class NoSuitableCode(GaitPairError):
    """No code satisfies the requested length / error-rate constraints."""


# -- protocol ------------------------------------------------------------------

class ProtocolError(GaitPairError):
    """Base class for handshake failures."""


class Timeout(ProtocolError):
    """Peer did not answer within the phase deadline."""


class PakeFailure(ProtocolError):
    """Key agreement failed; derived passwords do not match."""


class MalformedMessage(ProtocolError):
    """Frame or payload violates the wire format."""


class ConfirmMismatch(ProtocolError):
    """Key-confirmation MAC did not verify."""


class InsufficientData(GaitPairError):
    """Not enough gait material for the requested operation."""


# -- dataset I/O ---------------------------------------------------------------

class SchemaMismatch(GaitPairError):
    """CSV header or manifest does not match the documented schema."""


class MissingColumns(SchemaMismatch):
    """Required CSV columns are absent."""


class NonMonotoneTimestamps(GaitPairError):
    """Timestamps are not strictly increasing."""


class SignalTooShort(GaitPairError):
    """Signal shorter than one analysis window."""


# -- evaluation ----------------------------------------------------------------

class InsufficientPairs(GaitPairError):
    """Too few record pairs for the requested analysis."""


class InsufficientBits(GaitPairError):
    """Corpus does not yield enough fingerprint bits per window."""


class MissingPosition(GaitPairError):
    """A sensor position required by the analysis is absent."""


class TooFewKeys(GaitPairError):
    """Randomness testing needs a larger key corpus."""


class ConfigError(GaitPairError):
    """Invalid parameter combination."""

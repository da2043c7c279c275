"""Gait-based device-to-device pairing toolkit.

Body-worn devices derive always-fresh shared secrets from the wearer's
instantaneous gait: IMU streams are orientation-corrected and band-limited,
segmented into normalized gait cycles, quantized into reliability-ranked
binary fingerprints, and error-corrected into matching keys that seed a
password-authenticated key exchange.
"""

from .config import Config
from .dataset_io import (
    Corpus,
    PositionSpec,
    SyntheticGaitSpec,
    Window,
    generate_synthetic,
    load_csv,
    save_csv,
    sliding_windows,
    synthetic_vertical_signal,
)
from .fingerprint import (
    AverageCycle,
    Fingerprint,
    ReducedFingerprint,
    ReliabilityOrder,
    average_cycle,
    quantize,
    reduce,
    reliability_order,
    similarity,
)
from .fuzzy_ecc import CodeParams, FuzzyKey, choose_params, code_table, decode, encode
from .gait import (
    CycleDetection,
    GaitSequence,
    autocorrelate,
    detect_cycles,
    split_and_normalize,
)
from .protocol import (
    PakeEngine,
    SessionResult,
    SimulatedPake,
    confirm_key,
    run_pair_in_memory,
    run_session,
    shift_retry,
)
from .signals import (
    ImuRecord,
    Orientation,
    VerticalSignal,
    bandpass,
    extract_vertical,
    fuse_orientation,
    preprocess_record,
)

__version__ = "0.1.0"

__all__ = [
    "Config",
    "Corpus",
    "PositionSpec",
    "SyntheticGaitSpec",
    "Window",
    "generate_synthetic",
    "load_csv",
    "save_csv",
    "sliding_windows",
    "synthetic_vertical_signal",
    "AverageCycle",
    "Fingerprint",
    "ReducedFingerprint",
    "ReliabilityOrder",
    "average_cycle",
    "quantize",
    "reduce",
    "reliability_order",
    "similarity",
    "CodeParams",
    "FuzzyKey",
    "choose_params",
    "code_table",
    "decode",
    "encode",
    "CycleDetection",
    "GaitSequence",
    "autocorrelate",
    "detect_cycles",
    "split_and_normalize",
    "PakeEngine",
    "SessionResult",
    "SimulatedPake",
    "confirm_key",
    "run_pair_in_memory",
    "run_session",
    "shift_retry",
    "ImuRecord",
    "Orientation",
    "VerticalSignal",
    "bandpass",
    "extract_vertical",
    "fuse_orientation",
    "preprocess_record",
]

"""Command-line entry point: preprocess recordings, pair two of them over an
in-memory channel, run evaluation analyses, or generate a synthetic corpus.

Exit codes: 0 success, 2 schema errors, 3 signal errors, 4 pairing failure,
5 insufficient data, 64 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset_io, eval_harness
from .config import Config
from .errors import (
    ConfigError,
    GaitPairError,
    InsufficientBits,
    InsufficientPairs,
    MissingColumns,
    MissingPosition,
    NonMonotoneTimestamps,
    SchemaMismatch,
    SignalTooShort,
    TooFewKeys,
)
from .fingerprint import (
    ReliabilityOrder,
    average_cycle,
    quantize,
    reduce,
    reliability_order,
    similarity,
)
from .gait import detect_cycles
from .protocol import run_pair_in_memory, session_code_params
from .signals import VerticalSignal, preprocess_record

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SIGNAL = 3
EXIT_PAIRING = 4
EXIT_INSUFFICIENT = 5
EXIT_USAGE = 64

ANALYSES = ("coherence", "reliability", "discriminability", "positions",
            "randomness", "security")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rho", type=int, default=40,
                        help="samples per normalized gait cycle")
    parser.add_argument("--bits-per-cycle", type=int, default=4,
                        help="fingerprint bits per gait cycle")
    parser.add_argument("--fingerprint-bits", type=int, default=192,
                        help="total fingerprint length M")
    parser.add_argument("--cutoff", type=int, default=128,
                        help="reliability cutoff N")
    parser.add_argument("--threshold", type=float, default=0.8,
                        help="similarity required for pairing")
    parser.add_argument("--band", type=str, default="0.5:12",
                        help="bandpass corners as lo:hi in Hz")
    parser.add_argument("--sample-rate", type=float, default=50.0,
                        help="nominal sample rate in Hz")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for synthetic data and evaluation")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for evaluation")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="stdout summary format")


def _config_from_args(args: argparse.Namespace) -> Config:
    try:
        lo_s, hi_s = args.band.split(":")
        band = (float(lo_s), float(hi_s))
    except ValueError:
        raise ConfigError(f"--band must look like lo:hi, got {args.band!r}")
    return Config(
        rho=args.rho,
        bits_per_cycle=args.bits_per_cycle,
        fingerprint_bits=args.fingerprint_bits,
        cutoff=args.cutoff,
        threshold=args.threshold,
        band=band,
        sample_rate=args.sample_rate,
        seed=args.seed,
    )


# -- preprocess -----------------------------------------------------------------------

def _signal_to_json(sig: VerticalSignal) -> dict:
    return {
        "subject_id": sig.subject_id,
        "position": sig.position,
        "recording_id": sig.recording_id,
        "sample_rate_hz": sig.sample_rate,
        "z": [float(v) for v in sig.z],
    }


def _signal_from_json(path: Path) -> VerticalSignal:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return VerticalSignal(
        sample_rate=float(data["sample_rate_hz"]),
        z=np.asarray(data["z"], dtype=float),
        subject_id=str(data.get("subject_id", "")),
        position=str(data.get("position", "other")),
        recording_id=str(data.get("recording_id", "0")),
    )


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    try:
        corpus = dataset_io.load_csv(args.input)
    except (MissingColumns, SchemaMismatch, NonMonotoneTimestamps) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for rec in corpus.records:
        label = f"{rec.subject_id}/{rec.position}/{rec.recording_id}"
        try:
            sig = preprocess_record(rec, band=cfg.band)
            detect_cycles(sig)  # surface undetectable-gait diagnostics early
        except GaitPairError as exc:
            failures += 1
            print(f"signal error [{label}]: {type(exc).__name__}: {exc}",
                  file=sys.stderr)
            continue
        name = f"{rec.subject_id}_{rec.position}_{rec.recording_id}.json"
        with open(out_dir / name.replace("/", "-"), "w", encoding="utf-8") as fh:
            json.dump(_signal_to_json(sig), fh)
        print(f"ok [{label}] -> {name}")
    if failures:
        print(f"{failures} recording(s) failed", file=sys.stderr)
        return EXIT_SIGNAL
    return EXIT_OK


# -- pair ------------------------------------------------------------------------------

def cmd_pair(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    try:
        sig_a = _signal_from_json(Path(args.record_a))
        sig_b = _signal_from_json(Path(args.record_b))
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    q = cfg.cycles_per_fingerprint
    try:
        wins_a = dataset_io.sliding_windows(sig_a, q, overlap=0.5, rho=cfg.rho)
        wins_b = dataset_io.sliding_windows(sig_b, q, overlap=0.5, rho=cfg.rho)
        seq_a = wins_a[args.window].sequence
        seq_b = wins_b[args.window].sequence
    except (SignalTooShort, IndexError) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except GaitPairError as exc:
        print(f"signal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIGNAL

    t0 = time.monotonic()
    res_a, res_b = run_pair_in_memory(seq_a, seq_b, cfg,
                                      seed=args.insecure_session_seed)
    elapsed = time.monotonic() - t0

    # out-of-band diagnostic: similarity under the order actually applied
    fp_a = quantize(seq_a, average_cycle(seq_a), cfg.bits_per_cycle)
    fp_b = quantize(seq_b, average_cycle(seq_b), cfg.bits_per_cycle)
    diag_similarity = None
    applied = res_a.applied_order if res_a.applied_order is not None \
        else res_b.applied_order
    if applied is None:
        applied = reliability_order(fp_a).order
    try:
        order = ReliabilityOrder(order=np.asarray(applied))
        diag_similarity = similarity(reduce(fp_a, order, cfg.cutoff),
                                     reduce(fp_b, order, cfg.cutoff))
    except GaitPairError:
        pass

    params = session_code_params(cfg)
    result = {
        "established": bool(res_a.established and res_b.established),
        "similarity": diag_similarity,
        "code": {"n": params.n, "k": params.k, "t": params.t},
        "decode": {
            "initiator_corrected_errors": res_a.corrected_errors,
            "responder_corrected_errors": res_b.corrected_errors,
        },
        "failure": {"initiator": res_a.failure, "responder": res_b.failure},
        "secrets_equal": bool(
            res_a.established and res_b.established
            and res_a.secret == res_b.secret),
        "elapsed_s": elapsed,
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK if result["established"] else EXIT_PAIRING


# -- eval ------------------------------------------------------------------------------

def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def _write_pairs_csv(path: Path, pairs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_a", "position_a", "subject_b", "position_b",
                         "window", "similarity"])
        for p in pairs:
            writer.writerow([p.subject_a, p.position_a, p.subject_b,
                             p.position_b, p.window, repr(p.value)])


def _emit(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, indent=2))
    else:
        for key, value in summary.items():
            print(f"{key},{value}")


def cmd_eval(args: argparse.Namespace) -> int:
    if args.analysis not in ANALYSES:
        print(f"unknown analysis {args.analysis!r}; choose from {ANALYSES}",
              file=sys.stderr)
        return EXIT_USAGE
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.analysis == "security":
        report = eval_harness.security_arithmetic(args.session_seconds,
                                                  cfg.threshold, cfg.cutoff)
        _write_json(out_dir / "security.json", report)
        _emit(report, args.format)
        return EXIT_OK

    try:
        corpus = dataset_io.load_csv(args.corpus)
    except (SchemaMismatch, NonMonotoneTimestamps) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    try:
        if args.analysis == "coherence":
            rep = eval_harness.coherence_analysis(corpus, cfg, jobs=args.jobs)
            _write_json(out_dir / "coherence.json", rep.to_dict())
            _emit({"n_same_pairs": rep.n_same_pairs,
                   "n_diff_pairs": rep.n_diff_pairs,
                   "low_band_elevated": rep.low_band_elevated}, args.format)
        elif args.analysis == "reliability":
            rep = eval_harness.reliability_sweep(corpus, N=cfg.cutoff, cfg=cfg,
                                                 jobs=args.jobs)
            _write_json(out_dir / "reliability.json", rep.to_dict())
            for entry in rep.entries:
                _write_pairs_csv(out_dir / f"reliability_M{entry.M}.csv",
                                 entry.pairs)
            _emit({f"mean_M{e.M}": e.summary.mean for e in rep.entries},
                  args.format)
        elif args.analysis == "discriminability":
            rep = eval_harness.discriminability(corpus, cfg=cfg, jobs=args.jobs)
            _write_json(out_dir / "discriminability.json", rep.to_dict())
            _write_pairs_csv(out_dir / "discriminability_intra.csv", rep.intra_pairs)
            _write_pairs_csv(out_dir / "discriminability_inter.csv", rep.inter_pairs)
            _emit({"intra_mean": rep.intra.mean,
                   "inter_mean": float(np.mean([p.value for p in rep.inter_pairs])),
                   "collision_rate": rep.collision_rate_above_threshold},
                  args.format)
        elif args.analysis == "positions":
            rep = eval_harness.position_table(corpus, cfg=cfg, jobs=args.jobs)
            _write_json(out_dir / "positions.json", rep.to_dict())
            _emit({"positions": ";".join(rep.positions)}, args.format)
        elif args.analysis == "randomness":
            keys = eval_harness.fingerprint_keys(corpus, cfg, jobs=args.jobs)
            rep = eval_harness.randomness_suite(keys)
            _write_json(out_dir / "randomness.json", rep.to_dict())
            _emit({"passed": rep.passed, **rep.p_values}, args.format)
    except (InsufficientPairs, InsufficientBits, TooFewKeys, SignalTooShort,
            MissingPosition) as exc:
        print(f"insufficient data: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    return EXIT_OK


# -- synth -----------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    positions = tuple(p.strip() for p in args.positions.split(",") if p.strip())
    if not positions:
        print("no positions given", file=sys.stderr)
        return EXIT_USAGE
    spec = dataset_io.SyntheticGaitSpec(
        base_period=args.base_period,
        n_cycles=args.cycles,
        per_position=tuple(
            (p, dataset_io.PositionSpec(noise_snr_db=args.snr_db)) for p in positions),
        rng_seed=cfg.seed if cfg.seed is not None else 0,
        n_subjects=args.subjects,
        sample_rate=cfg.sample_rate,
    )
    corpus = dataset_io.generate_synthetic(spec)
    manifest = dataset_io.save_csv(corpus, args.out)
    print(f"wrote {len(corpus.records)} recordings, manifest {manifest}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitpair",
        description="Gait-based device pairing: preprocessing, pairing, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pre = sub.add_parser("preprocess", help="IMU CSV corpus -> vertical signals")
    p_pre.add_argument("input", help="corpus directory or manifest.json")
    p_pre.add_argument("output", help="output directory")
    _add_config_flags(p_pre)
    p_pre.set_defaults(func=cmd_preprocess)

    p_pair = sub.add_parser("pair", help="pair two preprocessed recordings")
    p_pair.add_argument("record_a", help="preprocessed JSON (initiator)")
    p_pair.add_argument("record_b", help="preprocessed JSON (responder)")
    p_pair.add_argument("--window", type=int, default=0,
                        help="window index to pair on")
    p_pair.add_argument("--insecure-session-seed", type=int, default=None,
                        help="INSECURE: derive nonces and PAKE salts from this "
                             "seed (reproducible sessions for testing only)")
    _add_config_flags(p_pair)
    p_pair.set_defaults(func=cmd_pair)

    p_eval = sub.add_parser("eval", help="run an evaluation analysis")
    p_eval.add_argument("corpus", nargs="?", default=None,
                        help="corpus directory or manifest.json")
    p_eval.add_argument("--analysis", required=True,
                        help=f"one of {', '.join(ANALYSES)}")
    p_eval.add_argument("--out", default=".", help="report output directory")
    p_eval.add_argument("--session-seconds", type=float, default=200.0,
                        help="session length used by the security analysis")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("out", help="output directory")
    p_synth.add_argument("--subjects", type=int, default=2)
    p_synth.add_argument("--positions", default="chest,forearm,waist")
    p_synth.add_argument("--cycles", type=int, default=60)
    p_synth.add_argument("--base-period", type=float, default=2.0)
    p_synth.add_argument("--snr-db", type=float, default=20.0)
    _add_config_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and args.analysis != "security" and not args.corpus:
        print("eval (other than --analysis security) requires a corpus path",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg_check = _config_from_args(args)  # validate before touching files
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    del cfg_check
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

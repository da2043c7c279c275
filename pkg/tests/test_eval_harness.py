import math

import numpy as np
import pytest
from scipy import signal as sps

from gaitpair.config import Config
from gaitpair.dataset_io import Corpus, PositionSpec, SyntheticGaitSpec, generate_synthetic
from gaitpair.errors import InsufficientPairs, MissingPosition, TooFewKeys
from gaitpair.eval_harness import (
    CoherenceReport,
    coherence_analysis,
    discriminability,
    position_table,
    randomness_suite,
    reliability_sweep,
    security_arithmetic,
)
from gaitpair.signals import GRAVITY, ImuRecord


# -- coherence -------------------------------------------------------------------------

def _imu_from_vertical(motion, subject, position, fs=50.0, recording="r0"):
    n = motion.shape[0]
    acc = np.zeros((n, 3))
    acc[:, 2] = GRAVITY + motion
    return ImuRecord(sample_rate=fs, t=np.arange(n) / fs, acc=acc,
                     gyro=np.zeros((n, 3)), subject_id=subject,
                     position=position, recording_id=recording)


def test_identical_signals_have_unit_coherence():
    rng = np.random.default_rng(0)
    motion = rng.standard_normal(3000)
    other = rng.standard_normal(3000)
    corpus = Corpus(records=[
        _imu_from_vertical(motion, "s0", "chest"),
        _imu_from_vertical(motion, "s0", "waist"),
        _imu_from_vertical(other, "s1", "chest"),
        _imu_from_vertical(other, "s1", "waist"),
    ])
    rep = coherence_analysis(corpus)
    assert isinstance(rep, CoherenceReport)
    assert np.all(rep.mean_same_subject > 1.0 - 1e-9)
    assert np.all(rep.mean_same_subject <= 1.0 + 1e-12)


def test_white_noise_coherence_matches_estimator_bias():
    rng = np.random.default_rng(1)
    n = 3000
    corpus = Corpus(records=[
        _imu_from_vertical(rng.standard_normal(n), "s0", "chest"),
        _imu_from_vertical(rng.standard_normal(n), "s0", "waist"),
        _imu_from_vertical(rng.standard_normal(n), "s1", "chest"),
        _imu_from_vertical(rng.standard_normal(n), "s1", "waist"),
    ])
    rep = coherence_analysis(corpus)
    observed = float(np.mean(rep.mean_different_subject[1:-1]))

    # Monte-Carlo oracle: same Welch estimator on independent noise pairs
    nperseg = max(8, int(n / 4.5))
    mc = []
    for seed in range(40):
        r = np.random.default_rng(100 + seed)
        _, c = sps.coherence(r.standard_normal(n), r.standard_normal(n),
                             fs=50.0, window="hann", nperseg=nperseg,
                             noverlap=nperseg // 2)
        mc.append(float(np.mean(c[1:-1])))
    mc = np.asarray(mc)
    assert abs(observed - mc.mean()) < 6 * mc.std()
    # rough magnitude: ~1/segments_averaged
    segments = (n - nperseg) // (nperseg // 2) + 1
    assert observed < 3.0 / segments


def test_same_body_coherence_elevated_in_band(tiny_corpus):
    rep = coherence_analysis(tiny_corpus)
    band = (rep.freqs >= 0.5) & (rep.freqs <= 12.0)
    assert float(np.mean(rep.mean_same_subject[band])) > \
        float(np.mean(rep.mean_different_subject[band])) + 0.1


def test_coherence_needs_simultaneous_pairs():
    rng = np.random.default_rng(2)
    corpus = Corpus(records=[
        _imu_from_vertical(rng.standard_normal(2000), "s0", "chest"),
        _imu_from_vertical(rng.standard_normal(2000), "s1", "chest"),
    ])
    with pytest.raises(InsufficientPairs):
        coherence_analysis(corpus)


# -- reliability sweep -------------------------------------------------------------------

def test_sweep_grid_and_direction(small_corpus, cfg):
    rep = reliability_sweep(small_corpus, N=128, cfg=cfg)
    assert [e.extra_bits for e in rep.entries] == [0, 16, 32, 48, 64, 128]
    assert [e.M for e in rep.entries] == [128, 144, 160, 176, 192, 256]
    means = rep.mean_by_extra()
    assert means[64] > means[0]
    for entry in rep.entries:
        assert entry.summary.count == len(entry.pairs) > 0
        assert 0.0 <= entry.summary.mean <= 1.0


def test_sweep_baseline_is_pure_truncation(small_corpus, cfg):
    # with M == N the reduction permutes all bits on both sides: similarity
    # equals the raw fingerprint agreement
    from gaitpair.eval_harness import _preprocess_corpus, _windows_by_key
    from gaitpair.fingerprint import average_cycle, quantize

    rep = reliability_sweep(small_corpus, N=128, extra_bits=(0,), cfg=cfg)
    processed = _preprocess_corpus(small_corpus, cfg)
    windows = _windows_by_key(processed, cfg, 128 // cfg.bits_per_cycle)
    pair = rep.entries[0].pairs[0]
    key_a = (pair.subject_a, pair.position_a, "r0")
    key_b = (pair.subject_b, pair.position_b, "r0")
    wa = windows[key_a][pair.window].sequence
    wb = windows[key_b][pair.window].sequence
    fa = quantize(wa, average_cycle(wa), cfg.bits_per_cycle)
    fb = quantize(wb, average_cycle(wb), cfg.bits_per_cycle)
    raw_agreement = 1.0 - np.count_nonzero(fa.bits != fb.bits) / 128
    assert pair.value == pytest.approx(raw_agreement, abs=1e-12)


# -- discriminability -----------------------------------------------------------------------

def test_discriminability_counts_match_combinatorics(small_corpus, cfg):
    rep = discriminability(small_corpus, cfg=cfg)
    subjects = len(small_corpus.subjects)
    positions = len(small_corpus.positions)
    windows_per_record = {}
    for p in rep.intra_pairs:
        windows_per_record.setdefault((p.subject_a, p.position_a), set()).add(p.window)
    n_windows = len(next(iter(windows_per_record.values())))
    expected_intra = subjects * math.comb(positions, 2) * n_windows
    assert rep.intra.count == expected_intra
    expected_inter = math.comb(subjects, 2) * positions * n_windows
    assert len(rep.inter_pairs) == expected_inter


def test_discriminability_separates_bodies(small_corpus, cfg):
    rep = discriminability(small_corpus, cfg=cfg)
    inter_mean = float(np.mean([p.value for p in rep.inter_pairs]))
    assert abs(inter_mean - 0.5) < 0.05
    assert rep.intra.mean > inter_mean + 0.2
    assert 0.0 <= rep.collision_rate_above_threshold <= 1.0
    manual = float(np.mean([p.value > cfg.threshold for p in rep.inter_pairs]))
    assert rep.collision_rate_above_threshold == pytest.approx(manual)


def test_discriminability_single_subject_raises():
    corpus = generate_synthetic(SyntheticGaitSpec(n_cycles=60, n_subjects=1,
                                                  rng_seed=5))
    with pytest.raises(InsufficientPairs):
        discriminability(corpus, cfg=Config())


# -- position table ---------------------------------------------------------------------------

def test_position_table_diagonal_and_symmetry(small_corpus, cfg):
    table = position_table(small_corpus, cfg=cfg)
    k = len(table.positions)
    assert table.matrix.shape == (k, k)
    assert np.allclose(np.diag(table.matrix), 1.0)
    assert np.allclose(table.matrix, table.matrix.T, atol=1e-12)
    off_diag = table.matrix[~np.eye(k, dtype=bool)]
    assert np.all((off_diag > 0.5) & (off_diag < 1.0))


def test_position_table_consistent_with_raw_pairs(small_corpus, cfg):
    table = position_table(small_corpus, cfg=cfg)
    rep = discriminability(small_corpus, cfg=cfg)
    pos = table.positions
    i, j = 0, 1
    vals = [p.value for p in rep.intra_pairs
            if {p.position_a, p.position_b} == {pos[i], pos[j]}]
    assert table.matrix[i, j] == pytest.approx(float(np.mean(vals)), abs=1e-12)


def test_position_table_missing_position(small_corpus, cfg):
    with pytest.raises(MissingPosition):
        position_table(small_corpus, cfg=cfg,
                       required_positions=("chest", "forearm", "head"))


# -- randomness suite ---------------------------------------------------------------------------

def _keys_from_bits(bits, key_len=128):
    n_keys = bits.size // key_len
    return [bits[i * key_len:(i + 1) * key_len] for i in range(n_keys)]


def test_good_rng_passes_suite():
    rng = np.random.default_rng(12345)
    bits = rng.integers(0, 2, size=200_000).astype(np.uint8)
    rep = randomness_suite(_keys_from_bits(bits))
    assert rep.passed, rep.p_values
    assert set(rep.p_values) == {
        "monobit_frequency", "block_frequency", "runs", "longest_run",
        "serial", "approximate_entropy"}


def test_all_zero_keys_fail_monobit():
    rep = randomness_suite(_keys_from_bits(np.zeros(100 * 128, dtype=np.uint8)))
    assert not rep.passed
    assert rep.p_values["monobit_frequency"] < 1e-6
    assert "monobit_frequency" in rep.failures


def test_alternating_stream_fails():
    bits = np.tile(np.array([0, 1], dtype=np.uint8), 100 * 64)
    rep = randomness_suite(_keys_from_bits(bits))
    assert not rep.passed


def test_repeated_pattern_fails():
    pattern = np.array([1, 1, 0, 1, 0, 0, 1, 0], dtype=np.uint8)
    bits = np.tile(pattern, 100 * 16)
    rep = randomness_suite(_keys_from_bits(bits))
    assert not rep.passed


def test_too_few_keys():
    with pytest.raises(TooFewKeys):
        randomness_suite(_keys_from_bits(np.zeros(99 * 128, dtype=np.uint8)))


def test_fingerprint_keys_monobit_within_3_sigma(small_corpus, cfg):
    from gaitpair.eval_harness import fingerprint_keys
    keys = fingerprint_keys(small_corpus, cfg)
    pooled = np.concatenate([k.bits for k in keys])
    sigma = 0.5 / math.sqrt(pooled.size)
    assert abs(float(pooled.mean()) - 0.5) < 3 * sigma + 1e-12


# -- security arithmetic ---------------------------------------------------------------------------

def test_security_arithmetic_deployment_values():
    assert security_arithmetic(200.0, 0.8, 128) == {"tries_per_day": 432, "t": 25}


def test_security_arithmetic_one_try_per_day():
    assert security_arithmetic(86400.0, 0.8, 128)["tries_per_day"] == 1


def test_security_arithmetic_data_floor():
    # 48 two-second cycles put a ~96 s floor under any session
    result = security_arithmetic(96.0 + 2 * 5.0, 0.8, 128)
    assert result["tries_per_day"] == 86400 // 106


def test_security_arithmetic_exact_fraction_edges():
    assert security_arithmetic(200.0, 0.8, 10)["t"] == 2
    with pytest.raises(ValueError):
        security_arithmetic(0.0, 0.8, 128)

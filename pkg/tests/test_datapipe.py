"""Datapipe oracles: FIR frequency response measured against sinusoid
fits, gating/outlier behaviour on constructed signals, split counting
arithmetic, and window assembly."""

import numpy as np
import pytest

from slipbench.dataio import FRAME_COLUMNS, Dataset, Manoeuvre
from slipbench.datapipe import (
    GATE_SPEED,
    SplitSpec,
    clean_dataset,
    flag_outliers,
    gate_low_speed,
    lowpass_frames,
    lowpass_manoeuvre,
    lowpass_taps,
    split_by_manoeuvre,
    split_counts,
    window_sequences,
    zero_phase_lowpass,
)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _fit_sine(t, x, freq):
    """Least-squares amplitude and phase of one frequency component."""
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    amp = float(np.hypot(*coef))
    phase = float(np.arctan2(coef[1], coef[0]))
    return amp, phase


# ---------------------------------------------------------------------------
# FIR filter


def test_lowpass_dc_gain_is_unity():
    taps = lowpass_taps(5.0, 100.0, 64)
    assert abs(taps.sum() - 1.0) < 1e-12
    x = np.full(1000, 3.7)
    y = zero_phase_lowpass(x)
    assert np.max(np.abs(y - 3.7)) < 1e-6 * 3.7  # edges included


def test_lowpass_passband_amplitude_and_zero_lag():
    t = np.arange(2000) / 100.0
    x = np.sin(2 * np.pi * 1.0 * t)
    y = zero_phase_lowpass(x)
    interior = slice(200, -200)
    amp, phase = _fit_sine(t[interior], y[interior], 1.0)
    assert abs(amp - 1.0) < 0.01
    assert abs(phase) < 1e-6
    # integer-lag cross-correlation peaks at exactly zero lag
    lags = np.arange(-50, 51)
    xc = [np.dot(y[200 + L : 1800 + L], x[200:1800]) for L in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_lowpass_stopband_attenuation():
    t = np.arange(4000) / 100.0
    x = np.sin(2 * np.pi * 20.0 * t)
    y = zero_phase_lowpass(x)
    amp, _ = _fit_sine(t[200:-200], y[200:-200], 20.0)
    assert amp < 10 ** (-40.0 / 20.0)  # at least 40 dB down


def test_lowpass_separates_mixture():
    t = np.arange(3000) / 100.0
    lowband = 0.8 * np.sin(2 * np.pi * 1.0 * t + 0.3)
    x = lowband + 0.5 * np.sin(2 * np.pi * 20.0 * t)
    y = zero_phase_lowpass(x)
    assert np.max(np.abs(y[300:-300] - lowband[300:-300])) < 0.02


def test_lowpass_rejects_short_signals():
    with pytest.raises(ValueError, match="too short"):
        zero_phase_lowpass(np.zeros(64))
    zero_phase_lowpass(np.zeros(65))  # minimum viable length


def test_lowpass_taps_validation():
    with pytest.raises(ValueError, match="even"):
        lowpass_taps(5.0, 100.0, 63)
    with pytest.raises(ValueError, match="Nyquist"):
        lowpass_taps(60.0, 100.0, 64)


def _make_manoeuvre(n=400, seed=0, vx=15.0, kind="slalom", mid="m1"):
    rng = _rng(seed)
    frames = rng.normal(scale=0.1, size=(n, len(FRAME_COLUMNS)))
    frames[:, FRAME_COLUMNS.index("t")] = np.arange(n) * 0.01
    frames[:, FRAME_COLUMNS.index("vx")] += vx
    truth = rng.normal(size=(n, 4))
    return Manoeuvre(id=mid, kind=kind, frames=frames, truth=truth)


def test_lowpass_frames_leaves_time_and_original_untouched():
    man = _make_manoeuvre(n=300)
    before = man.frames.copy()
    filtered = lowpass_manoeuvre(man)
    np.testing.assert_array_equal(filtered.frames[:, 0], before[:, 0])  # t
    assert not np.array_equal(filtered.frames[:, 3], before[:, 3])  # ay smoothed
    np.testing.assert_array_equal(man.frames, before)  # no aliasing
    j = FRAME_COLUMNS.index("beta_true")
    assert not np.array_equal(filtered.frames[:, j], before[:, j])  # targets filtered too
    assert np.std(filtered.frames[:, j]) < np.std(before[:, j])


# ---------------------------------------------------------------------------
# Gating and outliers


def test_gate_drops_slow_frames_and_keeps_truth_aligned():
    man = _make_manoeuvre(n=200, vx=10.0)
    j = FRAME_COLUMNS.index("vx")
    man.frames[50:80, j] = 1.0  # below the 2.5 m/s gate
    man.frames[120, j] = GATE_SPEED  # boundary counts as gated
    gated = gate_low_speed(man)
    assert len(gated.frames) == 200 - 30 - 1
    assert np.all(gated.col("vx") > GATE_SPEED)
    assert len(gated.truth) == len(gated.frames)
    keep = man.col("vx") > GATE_SPEED
    np.testing.assert_array_equal(gated.truth, man.truth[keep])


def test_gate_warns_when_everything_is_dropped():
    man = _make_manoeuvre(n=100, vx=1.0)
    with pytest.warns(UserWarning, match="every frame gated"):
        gated = gate_low_speed(man)
    assert len(gated.frames) == 0


def test_outlier_spike_is_flagged_but_not_deleted():
    man = _make_manoeuvre(n=500, seed=3)
    j = FRAME_COLUMNS.index("delta")
    spike_at = 237
    man.frames[spike_at, j] += np.deg2rad(50.0)
    flagged = flag_outliers(man)
    assert len(flagged.frames) == 500  # nothing deleted
    assert flagged.outlier_flags.dtype == bool
    assert flagged.outlier_flags[spike_at]
    # the spike is the only excursion on an otherwise well-behaved record
    assert flagged.outlier_flags.sum() == 1


def test_outlier_rate_is_low_on_clean_noise():
    man = _make_manoeuvre(n=4000, seed=11)
    flagged = flag_outliers(man)
    assert flagged.outlier_flags.mean() < 0.005


def test_clean_dataset_composes_gate_and_flags():
    slow = _make_manoeuvre(n=150, vx=2.0, mid="m_slow")
    fast = _make_manoeuvre(n=150, vx=20.0, mid="m_fast", seed=5)
    ds = Dataset(manoeuvres=[slow, fast], seed=0)
    with pytest.warns(UserWarning):
        out = clean_dataset(ds)
    assert len(out.by_id("m_slow").frames) == 0
    assert len(out.by_id("m_fast").frames) == 150
    assert out.by_id("m_fast").outlier_flags is not None


# ---------------------------------------------------------------------------
# Splits


def test_split_counts_reference_values():
    assert split_counts(216) == (162, 32, 22)
    assert split_counts(10) == (8, 1, 1)
    assert split_counts(60) == (45, 9, 6)
    assert split_counts(23) == (18, 3, 2)


def test_split_fractions_validated():
    with pytest.raises(ValueError, match="sum to 1"):
        SplitSpec(0.8, 0.15, 0.10)
    with pytest.raises(ValueError, match="non-negative"):
        SplitSpec(1.2, -0.1, -0.1)


def _dataset_of(counts: dict[str, int]) -> Dataset:
    manoeuvres = []
    i = 0
    for kind, n in counts.items():
        for _ in range(n):
            manoeuvres.append(_make_manoeuvre(n=30, seed=i, kind=kind, mid=f"m{i:03d}_{kind}"))
            i += 1
    return Dataset(manoeuvres=manoeuvres, seed=0)


def test_split_is_a_partition_and_stratified():
    counts = {
        "j_turn": 13,
        "slalom": 10,
        "dlc": 11,
        "random_steer": 5,
        "spiral": 8,
        "skidpad": 5,
        "brake_in_turn": 5,
        "track_lap": 3,
    }
    ds = _dataset_of(counts)
    split = split_by_manoeuvre(ds, seed=4)
    all_ids = sorted(m.id for m in ds.manoeuvres)
    combined = sorted(split["train"] + split["val"] + split["test"])
    assert combined == all_ids
    assert len(split["train"]) == 45 and len(split["val"]) == 9 and len(split["test"]) == 6
    for kind, n in counts.items():
        in_train = sum(1 for mid in split["train"] if mid.endswith(kind))
        assert in_train >= 1, f"kind {kind} missing from train"
        # stratification: train share of each kind close to the global share
        assert abs(in_train / n - 0.75) < 0.35


def test_split_is_seed_deterministic():
    ds = _dataset_of({"j_turn": 7, "slalom": 8})
    s1 = split_by_manoeuvre(ds, seed=9)
    s2 = split_by_manoeuvre(ds, seed=9)
    s3 = split_by_manoeuvre(ds, seed=10)
    assert s1 == s2
    assert s1 != s3


def test_split_requires_ten_manoeuvres():
    ds = _dataset_of({"j_turn": 9})
    with pytest.raises(ValueError, match="at least 10"):
        split_by_manoeuvre(ds)


def test_split_never_loses_tiny_kinds():
    ds = _dataset_of({"j_turn": 17, "track_lap": 1, "skidpad": 2})
    split = split_by_manoeuvre(ds, seed=0)
    combined = sorted(split["train"] + split["val"] + split["test"])
    assert combined == sorted(m.id for m in ds.manoeuvres)


# ---------------------------------------------------------------------------
# Windows


def test_window_sequences_counts_and_content():
    feats = np.arange(60, dtype=float).reshape(30, 2)
    targets = np.arange(30, dtype=float)
    w, y = window_sequences(feats, targets, window=20)
    assert w.shape == (11, 20, 2)
    assert y.shape == (11,)
    np.testing.assert_array_equal(w[0], feats[0:20])
    np.testing.assert_array_equal(w[10], feats[10:30])
    np.testing.assert_array_equal(y, targets[19:])
    assert y[0] == 19.0  # target at the window's last step


def test_window_sequences_stride():
    feats = np.arange(60, dtype=float).reshape(30, 2)
    targets = np.arange(30, dtype=float)
    w, y = window_sequences(feats, targets, window=20, stride=8)
    assert w.shape == (2, 20, 2)
    np.testing.assert_array_equal(y, [19.0, 27.0])
    np.testing.assert_array_equal(w[1], feats[8:28])


def test_window_sequences_short_manoeuvre_warns_and_is_empty():
    with pytest.warns(UserWarning, match="shorter than"):
        w, y = window_sequences(np.zeros((10, 3)), np.zeros(10), window=20)
    assert w.shape == (0, 20, 3)
    assert y.shape == (0,)


def test_window_sequences_length_mismatch():
    with pytest.raises(ValueError, match="equal length"):
        window_sequences(np.zeros((10, 2)), np.zeros(9))

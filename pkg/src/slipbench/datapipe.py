"""Signal conditioning and dataset assembly for the learning estimators.

Filtering here feeds the data-driven models only: their inputs and
targets are smoothed with a zero-phase FIR low-pass, while the
model-based filters consume the raw noisy measurements untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .dataio import FRAME_COLUMNS, Dataset, Manoeuvre

GATE_SPEED = 2.5  # m/s; frames at or below this are dropped
OUTLIER_WINDOW = 21
OUTLIER_MADS = 6.0
MAD_SCALE = 1.4826  # robust sigma for Gaussian data

# channels subject to filtering / outlier screening (everything but time)
_SIGNAL_COLUMNS = tuple(c for c in FRAME_COLUMNS if c != "t")
_MEASUREMENT_COLUMNS = tuple(c for c in _SIGNAL_COLUMNS if c != "beta_true")


# ---------------------------------------------------------------------------
# Zero-phase FIR low-pass


def lowpass_taps(cutoff_hz: float, sample_rate_hz: float, order: int = 64) -> np.ndarray:
    """Hamming-windowed sinc taps, unit DC gain, odd length order+1."""
    if order % 2 != 0:
        raise ValueError("order must be even for an integer group delay")
    if not 0.0 < cutoff_hz < sample_rate_hz / 2.0:
        raise ValueError("cutoff must sit inside (0, Nyquist)")
    m = np.arange(order + 1) - order // 2
    taps = 2.0 * cutoff_hz / sample_rate_hz * np.sinc(2.0 * cutoff_hz / sample_rate_hz * m)
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(order + 1) / order)
    taps = taps * window
    return taps / taps.sum()


def zero_phase_lowpass(
    signal: np.ndarray,
    cutoff_hz: float = 5.0,
    sample_rate_hz: float = 100.0,
    order: int = 64,
) -> np.ndarray:
    """Low-pass with exact group-delay compensation (symmetric FIR).

    The input is reflection-padded by `order` samples on each side, so
    signals shorter than order+1 samples are rejected.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if x.size <= order:
        raise ValueError(
            f"signal of {x.size} samples is too short for an order-{order} filter"
        )
    taps = lowpass_taps(cutoff_hz, sample_rate_hz, order)
    pad = order
    padded = np.pad(x, pad, mode="reflect")
    full = np.convolve(padded, taps)
    start = pad + order // 2  # padding offset plus group delay
    return full[start : start + x.size]


def lowpass_frames(
    frames: np.ndarray,
    cutoff_hz: float = 5.0,
    sample_rate_hz: float = 100.0,
    order: int = 64,
) -> np.ndarray:
    """Filtered copy of a frame table; the time column is left alone."""
    out = np.array(frames, dtype=float, copy=True)
    for name in _SIGNAL_COLUMNS:
        j = FRAME_COLUMNS.index(name)
        out[:, j] = zero_phase_lowpass(out[:, j], cutoff_hz, sample_rate_hz, order)
    return out


def lowpass_manoeuvre(manoeuvre: Manoeuvre, **kwargs) -> Manoeuvre:
    return replace(manoeuvre, frames=lowpass_frames(manoeuvre.frames, **kwargs))


# ---------------------------------------------------------------------------
# Gating and outlier screening


def gate_low_speed(manoeuvre: Manoeuvre, threshold: float = GATE_SPEED) -> Manoeuvre:
    """Drop frames with vx <= threshold (truth rows stay aligned)."""
    vx = manoeuvre.col("vx")
    keep = vx > threshold
    if not keep.any():
        warnings.warn(
            f"manoeuvre {manoeuvre.id}: every frame gated at vx <= {threshold} m/s",
            stacklevel=2,
        )
    truth = manoeuvre.truth[keep] if manoeuvre.truth is not None else None
    flags = manoeuvre.outlier_flags[keep] if manoeuvre.outlier_flags is not None else None
    return replace(
        manoeuvre, frames=manoeuvre.frames[keep], truth=truth, outlier_flags=flags
    )


def _rolling_median(x: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    padded = np.pad(x, half, mode="reflect")
    view = np.lib.stride_tricks.sliding_window_view(padded, window)
    return np.median(view, axis=1)


def flag_outliers(
    manoeuvre: Manoeuvre,
    window: int = OUTLIER_WINDOW,
    n_mads: float = OUTLIER_MADS,
) -> Manoeuvre:
    """Rolling-median/MAD screen over the measurement channels.

    A frame is flagged when any channel sits more than `n_mads` robust
    standard deviations from its rolling median. Flagged frames are
    never deleted; downstream consumers decide what to do with them.
    """
    frames = manoeuvre.frames
    flags = np.zeros(len(frames), dtype=bool)
    if len(frames) >= window:
        for name in _MEASUREMENT_COLUMNS:
            x = manoeuvre.col(name)
            dev = np.abs(x - _rolling_median(x, window))
            scale = max(MAD_SCALE * float(np.median(dev)), 1e-12)
            flags |= dev > n_mads * scale
    return replace(manoeuvre, outlier_flags=flags)


def clean_dataset(dataset: Dataset, threshold: float = GATE_SPEED) -> Dataset:
    """Gate low-speed frames and flag outliers across a whole dataset."""
    cleaned = [flag_outliers(gate_low_speed(m, threshold)) for m in dataset.manoeuvres]
    return replace(dataset, manoeuvres=cleaned)


# ---------------------------------------------------------------------------
# Manoeuvre-level splits


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.75
    val: float = 0.15
    test: float = 0.10

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0.0:
            raise ValueError("split fractions must be non-negative")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def split_counts(n: int, spec: SplitSpec = SplitSpec()) -> tuple[int, int, int]:
    """Rounded val/test counts with the remainder going to train."""
    n_val = int(np.ceil(n * spec.val - 0.5))
    n_test = int(np.ceil(n * spec.test - 0.5))
    n_train = n - n_val - n_test
    if n_train < 1 or n_val < 0 or n_test < 0:
        raise ValueError(f"cannot split {n} manoeuvres as {spec}")
    return n_train, n_val, n_test


def split_by_manoeuvre(
    dataset: Dataset, spec: SplitSpec = SplitSpec(), seed: int = 0
) -> dict[str, list[str]]:
    """Stratified-by-kind manoeuvre split; returns id lists per subset.

    Global counts follow split_counts; val/test quotas are spread over
    the kinds by largest remainder so every kind contributes to train.
    """
    manoeuvres = dataset.manoeuvres
    if len(manoeuvres) < 10:
        raise ValueError("need at least 10 manoeuvres to split")
    n_train, n_val, n_test = split_counts(len(manoeuvres), spec)

    by_kind: dict[str, list[str]] = {}
    for m in manoeuvres:
        by_kind.setdefault(m.kind, []).append(m.id)
    kinds = sorted(by_kind)
    rng = np.random.Generator(np.random.PCG64(seed))
    for kind in kinds:
        ids = sorted(by_kind[kind])
        rng.shuffle(ids)
        by_kind[kind] = ids

    sizes = np.array([len(by_kind[k]) for k in kinds])
    val_alloc = _allocate_with_caps(n_val, sizes)
    test_alloc = _allocate_with_caps(n_test, sizes - val_alloc)

    split = {"train": [], "val": [], "test": []}
    for kind, n_v, n_t in zip(kinds, val_alloc, test_alloc):
        ids = by_kind[kind]
        split["val"].extend(ids[:n_v])
        split["test"].extend(ids[n_v : n_v + n_t])
        split["train"].extend(ids[n_v + n_t :])
    for subset in split:
        split[subset].sort()
    assert len(split["train"]) == n_train
    return split


def _allocate_with_caps(total: int, capacities: np.ndarray) -> np.ndarray:
    """Largest-remainder proportional allocation, never exceeding caps."""
    caps = np.asarray(capacities, dtype=int)
    if total > caps.sum():
        raise ValueError("allocation exceeds capacity")
    shares = caps / max(caps.sum(), 1) * total
    alloc = np.minimum(np.floor(shares).astype(int), caps)
    while alloc.sum() < total:
        frac = np.where(alloc < caps, shares - alloc, -np.inf)
        alloc[int(np.argmax(frac))] += 1
    return alloc


# ---------------------------------------------------------------------------
# Window assembly


def window_sequences(
    features: np.ndarray,
    targets: np.ndarray,
    window: int = 20,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows over one manoeuvre; target taken at the last step.

    A manoeuvre of N frames yields N - window + 1 windows at stride 1;
    shorter manoeuvres produce empty output and a warning. Windows never
    span manoeuvre boundaries because assembly is per manoeuvre.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(features) != len(targets):
        raise ValueError("features and targets must have equal length")
    if len(features) < window:
        warnings.warn(
            f"manoeuvre of {len(features)} frames is shorter than the "
            f"{window}-step window; producing no sequences",
            stacklevel=2,
        )
        return (
            np.empty((0, window, features.shape[1] if features.ndim == 2 else 0)),
            np.empty(0),
        )
    view = np.lib.stride_tricks.sliding_window_view(features, window, axis=0)
    windows = view.transpose(0, 2, 1)[::stride].copy()
    return windows, targets[window - 1 :: stride].copy()

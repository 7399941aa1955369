"""Windowed baseline gait detectors and per-subject threshold optimisation.

All detectors use non-overlapping windows. A trailing partial window is
scored when it holds at least half a window of samples; otherwise its
samples inherit the decision of the last full window.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from .signal_prep import PreprocessedSignal

WALKING_BAND = (0.5, 3.0)
ENERGY_BAND = (0.5, 10.0)
MORLET_OMEGA0 = 6.0


@dataclass(frozen=True)
class BinaryDetection:
    window_starts: np.ndarray
    window_length: int
    scores: np.ndarray
    threshold: float
    n_samples: int
    window_ends: np.ndarray | None = None

    def __post_init__(self):
        starts = np.asarray(self.window_starts, dtype=np.int64)
        ends = self.window_ends
        ends = np.minimum(starts + self.window_length, self.n_samples) if ends is None else np.asarray(ends, dtype=np.int64)
        object.__setattr__(self, "window_starts", starts)
        object.__setattr__(self, "window_ends", ends)
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))

    @property
    def decisions(self) -> np.ndarray:
        return self.scores >= self.threshold

    def _expand(self, values: np.ndarray) -> np.ndarray:
        lengths = np.diff(np.append(self.window_starts, self.n_samples))
        return np.repeat(values, lengths)

    @property
    def mask(self) -> np.ndarray:
        """Per-sample gait decision; samples after the last scored window copy its decision."""
        return self._expand(self.decisions)

    @property
    def sample_scores(self) -> np.ndarray:
        return self._expand(self.scores)

    def with_threshold(self, threshold: float) -> "BinaryDetection":
        return replace(self, threshold=float(threshold))

    def to_dict(self) -> dict:
        from .switching import run_length_encode

        return {
            "window_length": int(self.window_length),
            "window_starts": self.window_starts.tolist(),
            "scores": [float(s) for s in self.scores],
            "threshold": float(self.threshold),
            "n_samples": int(self.n_samples),
            "mask_rle": run_length_encode(self.mask.astype(np.int64)),
        }


def window_bounds(n: int, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Start/end indices of the scored non-overlapping windows."""
    if window < 1:
        raise ValueError("window must hold at least one sample")
    if n < window:
        raise ValueError(f"signal of {n} samples is shorter than the {window}-sample window")
    full = n // window
    starts = np.arange(full) * window
    ends = starts + window
    rest = n - full * window
    if rest > 0 and 2 * rest >= window:
        starts = np.append(starts, full * window)
        ends = np.append(ends, n)
    return starts, ends


def _samples(seconds: float, fs: float) -> int:
    return max(int(round(seconds * fs)), 1)


def _windowed(signal: PreprocessedSignal, window_s: float, score_fn, threshold: float) -> BinaryDetection:
    x = signal.values
    w = _samples(window_s, signal.sample_rate)
    starts, ends = window_bounds(x.size, w)
    scores = np.array([score_fn(x[a:b]) for a, b in zip(starts, ends)])
    return BinaryDetection(starts, w, scores, float(threshold), x.size, ends)


def std_detector(signal: PreprocessedSignal, threshold: float, window_s: float = 1.0) -> BinaryDetection:
    """Sample standard deviation per window."""
    if _samples(window_s, signal.sample_rate) < 2:
        raise ValueError("standard deviation windows need at least 2 samples")
    return _windowed(signal, window_s, lambda seg: float(np.std(seg, ddof=1)), threshold)


def band_energy_dft(segment: np.ndarray, fs: float, band: tuple[float, float]) -> float:
    """``sum |X_k|^2 / n`` over DFT bins whose frequency lies in ``band`` (inclusive)."""
    n = segment.size
    spectrum = np.fft.rfft(segment)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    sel = (freqs >= band[0]) & (freqs <= band[1])
    return float(np.sum(np.abs(spectrum[sel]) ** 2) / n)


def stft_detector(
    signal: PreprocessedSignal, threshold: float, window_s: float = 1.0, band: tuple[float, float] = ENERGY_BAND
) -> BinaryDetection:
    """Band energy of the rectangular-window DFT of each window."""
    fs = signal.sample_rate
    return _windowed(signal, window_s, lambda seg: band_energy_dft(seg, fs, band), threshold)


def max_normalized_autocorrelation(segment: np.ndarray, lag_lo: int, lag_hi: int) -> float:
    """Largest Pearson correlation between the window and its lagged copy over ``lag_lo..lag_hi``."""
    best = -1.0
    n = segment.size
    for lag in range(lag_lo, min(lag_hi, n - 2) + 1):
        a = segment[: n - lag] - segment[: n - lag].mean()
        b = segment[lag:] - segment[lag:].mean()
        denom = math.sqrt(float(a @ a) * float(b @ b))
        value = float(a @ b) / denom if denom > 0 else 0.0
        best = max(best, value)
    return best


def default_lag_range(fs: float, window: int) -> tuple[int, int]:
    """Lags for cadences between 3 Hz and 0.5 Hz, capped at half a window."""
    return int(math.ceil(fs / 3.0)), int(min(math.floor(fs / 0.5), window // 2))


def nasc_detector(
    signal: PreprocessedSignal,
    std_threshold: float,
    nasc_threshold: float,
    window_s: float = 2.0,
    lag_range: tuple[int, int] | None = None,
) -> BinaryDetection:
    """Maximum normalised autocorrelation, gated by the window standard deviation.

    Windows whose standard deviation is below ``std_threshold`` score -1.
    """
    w = _samples(window_s, signal.sample_rate)
    lo, hi = default_lag_range(signal.sample_rate, w) if lag_range is None else lag_range
    if lo < 1 or hi < lo:
        raise ValueError("lag range must satisfy 1 <= lo <= hi")
    if hi >= w:
        raise ValueError(f"largest lag {hi} must be shorter than the {w}-sample window")

    def score(seg):
        if seg.size < 2 or np.std(seg, ddof=1) < std_threshold:
            return -1.0
        return max_normalized_autocorrelation(seg, lo, hi)

    return _windowed(signal, window_s, score, nasc_threshold)


def morlet_frequencies(fs: float, f_lo: float = 0.25, voices: int = 8) -> np.ndarray:
    """Log-spaced analysis frequencies from ``f_lo`` up to 90% of Nyquist."""
    f_hi = 0.9 * fs / 2.0
    octaves = math.log2(f_hi / f_lo)
    count = int(math.floor(octaves * voices)) + 1
    return f_lo * 2.0 ** (np.arange(count) / voices)


def morlet_kernel(freq: float, fs: float, omega0: float = MORLET_OMEGA0) -> np.ndarray:
    """Sampled Morlet wavelet centred on ``freq`` with unit-energy scale normalisation."""
    fourier_factor = 4.0 * math.pi / (omega0 + math.sqrt(2.0 + omega0**2))
    scale = fs / (freq * fourier_factor)
    half = int(math.ceil(4.0 * scale))
    eta = np.arange(-half, half + 1) / scale
    return np.pi**-0.25 * np.exp(1j * omega0 * eta - 0.5 * eta**2) / math.sqrt(scale)


def morlet_power(x: np.ndarray, fs: float, freqs: np.ndarray) -> np.ndarray:
    """``|W|^2`` of the mean-removed series at each frequency; shape ``(len(freqs), len(x))``."""
    xc = np.asarray(x, dtype=float) - np.mean(x)
    out = np.empty((freqs.size, xc.size))
    for i, f in enumerate(freqs):
        kernel = morlet_kernel(f, fs)
        out[i] = np.abs(fftconvolve(xc, kernel, mode="same")) ** 2
    return out


def cwt_detector(
    signal: PreprocessedSignal,
    threshold: float,
    window_s: float = 1.0,
    band: tuple[float, float] = WALKING_BAND,
    freqs: np.ndarray | None = None,
) -> BinaryDetection:
    """Share of wavelet energy inside the walking band, per window (0 when the window has none)."""
    fs = signal.sample_rate
    freqs = morlet_frequencies(fs) if freqs is None else np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        raise ValueError("no wavelet scales to analyse")
    in_band = (freqs >= band[0]) & (freqs <= band[1])
    if not in_band.any():
        raise ValueError(f"no wavelet scale falls inside the walking band {band}")
    power = morlet_power(signal.values, fs, freqs)
    band_power = power[in_band].sum(axis=0)
    total_power = power.sum(axis=0)
    w = _samples(window_s, fs)
    starts, ends = window_bounds(signal.values.size, w)
    scores = np.empty(starts.size)
    for i, (a, b) in enumerate(zip(starts, ends)):
        total = total_power[a:b].sum()
        scores[i] = band_power[a:b].sum() / total if total > 0 else 0.0
    return BinaryDetection(starts, w, scores, float(threshold), signal.values.size, ends)


def _balanced_accuracy_curve(scores: np.ndarray, labels: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    tp = pos.size - np.searchsorted(pos, candidates, side="left")
    tn = np.searchsorted(neg, candidates, side="left")
    return 0.5 * (tp / pos.size + tn / neg.size)


def threshold_candidates(scores_per_subject) -> np.ndarray:
    pooled = np.unique(np.concatenate([np.asarray(s, dtype=float).ravel() for s in scores_per_subject]))
    if pooled.size == 1:
        return pooled
    return 0.5 * (pooled[:-1] + pooled[1:])


def optimize_threshold(scores_per_subject, labels_per_subject, return_details: bool = False):
    """Threshold maximising the mean per-subject balanced accuracy of ``score >= threshold``.

    Candidates are the midpoints between consecutive distinct pooled scores;
    ties go to the larger threshold. Subjects lacking either class are left
    out of the average and listed under ``excluded``.
    """
    scores_per_subject = [np.asarray(s, dtype=float).ravel() for s in scores_per_subject]
    labels_per_subject = [np.asarray(l, dtype=bool).ravel() for l in labels_per_subject]
    if len(scores_per_subject) != len(labels_per_subject):
        raise ValueError("one label array per score array is required")
    usable, excluded = [], []
    for idx, (s, l) in enumerate(zip(scores_per_subject, labels_per_subject)):
        if s.shape != l.shape:
            raise ValueError(f"subject {idx}: scores and labels differ in length")
        if l.all() or not l.any():
            excluded.append(idx)
        else:
            usable.append(idx)
    if not usable:
        raise ValueError("no subject has both classes present")
    if excluded:
        warnings.warn(f"subjects {excluded} lack one class and were excluded from threshold fitting")

    candidates = threshold_candidates([scores_per_subject[i] for i in usable])
    curve = np.zeros(candidates.size)
    for i in usable:
        curve += _balanced_accuracy_curve(scores_per_subject[i], labels_per_subject[i], candidates)
    curve /= len(usable)
    best = int(np.flatnonzero(curve == curve.max())[-1])
    threshold = float(candidates[best])
    if return_details:
        return {"threshold": threshold, "mean_balanced_accuracy": float(curve[best]), "excluded": excluded}
    return threshold

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitseg.detectors import (
    BinaryDetection,
    band_energy_dft,
    cwt_detector,
    default_lag_range,
    max_normalized_autocorrelation,
    nasc_detector,
    optimize_threshold,
    std_detector,
    stft_detector,
    window_bounds,
)
from gaitseg.signal_prep import PreprocessedSignal
from oracles import brute_force_threshold, direct_dft_energy, double_loop_nasc, two_pass_std

FS = 50.0


def sig(values, fs=FS):
    return PreprocessedSignal(np.asarray(values, dtype=float), fs)


# -- std ---------------------------------------------------------------------

def test_std_zero_signal_is_never_gait():
    det = std_detector(sig(np.zeros(500)), threshold=0.1)
    assert not det.decisions.any()
    assert not det.mask.any()


def test_std_scores_match_two_pass(rng):
    x = rng.normal(size=537)
    det = std_detector(sig(x), threshold=0.0)
    for a, b, score in zip(det.window_starts, det.window_ends, det.scores):
        assert score == pytest.approx(two_pass_std(list(x[a:b])), abs=1e-12)


def test_std_separates_gait_from_rest(rng):
    parts, truth = [], []
    for k in range(20):
        gait = k % 2 == 0
        parts.append(rng.normal(scale=2.0 if gait else 0.05, size=50))
        truth.append(gait)
    det = std_detector(sig(np.concatenate(parts)), threshold=0.5)
    assert np.array_equal(det.decisions, np.array(truth))


def test_std_rejects_short_signal():
    with pytest.raises(ValueError):
        std_detector(sig(np.zeros(10)), threshold=0.1)


# -- stft --------------------------------------------------------------------

def test_stft_dc_has_no_band_energy():
    det = stft_detector(sig(np.full(300, 9.81)), threshold=1e-9)
    assert np.all(det.scores < 1e-20)
    assert not det.decisions.any()


def test_stft_matches_direct_dft_for_2hz_sine():
    t = np.arange(250) / FS
    x = np.sin(2 * np.pi * 2.0 * t)
    det = stft_detector(sig(x), threshold=0.0)
    for a, b, score in zip(det.window_starts, det.window_ends, det.scores):
        assert score == pytest.approx(direct_dft_energy(list(x[a:b]), FS, 0.5, 10.0), rel=1e-9, abs=1e-9)
    assert det.scores[0] == pytest.approx(12.5, rel=1e-9)


def test_stft_band_energy_direct_on_noise(rng):
    x = rng.normal(size=64)
    assert band_energy_dft(x, FS, (0.5, 10.0)) == pytest.approx(direct_dft_energy(list(x), FS, 0.5, 10.0), rel=1e-9)


def test_stft_out_of_band_tone():
    t = np.arange(500) / FS
    det = stft_detector(sig(np.sin(2 * np.pi * 20.0 * t)), threshold=1e-6)
    assert np.all(det.scores < 1e-20)
    assert not det.decisions.any()


def test_stft_window_longer_than_signal():
    with pytest.raises(ValueError):
        stft_detector(sig(np.zeros(20)), threshold=1.0)


# -- nasc --------------------------------------------------------------------

def test_nasc_periodic_signal_scores_one(rng):
    period = rng.normal(size=25)
    x = np.tile(period, 8)
    det = nasc_detector(sig(x), std_threshold=0.0, nasc_threshold=0.999, lag_range=(15, 40))
    assert np.all(det.scores >= 0.999)
    assert det.decisions.all()


def test_nasc_white_noise_rarely_periodic(rng):
    # 6 s windows: with 2 s windows each correlation rests on 50-83 samples and
    # the maximum over 34 lags exceeds 0.3 in about a fifth of noise windows
    x = rng.normal(size=1000 * 300)
    det = nasc_detector(sig(x), std_threshold=0.0, nasc_threshold=0.3, window_s=6.0, lag_range=default_lag_range(FS, 100))
    assert det.scores.size == 1000
    assert np.mean(det.scores <= 0.3) >= 0.99


def test_nasc_matches_double_loop(rng):
    x = rng.normal(size=100) + np.sin(np.arange(100) / 3.0)
    lo, hi = default_lag_range(FS, 100)
    assert max_normalized_autocorrelation(x, lo, hi) == pytest.approx(double_loop_nasc(list(x), lo, hi), abs=1e-12)
    det = nasc_detector(sig(x), std_threshold=0.0, nasc_threshold=0.5)
    assert det.scores[0] == pytest.approx(double_loop_nasc(list(x), lo, hi), abs=1e-12)


def test_nasc_std_gate_and_lag_validation(rng):
    det = nasc_detector(sig(np.full(200, 3.0)), std_threshold=0.1, nasc_threshold=0.0)
    assert np.all(det.scores == -1.0)
    with pytest.raises(ValueError):
        nasc_detector(sig(rng.normal(size=300)), 0.0, 0.5, window_s=2.0, lag_range=(10, 100))


def test_nasc_default_lags_cover_walking_cadence():
    lo, hi = default_lag_range(FS, 100)
    assert FS / lo <= 3.0 + 1e-9
    assert hi == 50  # 1 Hz at half a 2 s window


# -- cwt ---------------------------------------------------------------------

def test_cwt_walking_tone_is_gait():
    t = np.arange(1000) / FS
    det = cwt_detector(sig(np.sin(2 * np.pi * 2.0 * t)), threshold=0.9)
    assert np.all(det.scores[2:-2] >= 0.9)


def test_cwt_fast_tone_is_not_gait():
    t = np.arange(1000) / FS
    det = cwt_detector(sig(np.sin(2 * np.pi * 20.0 * t)), threshold=0.1)
    assert np.all(det.scores <= 0.1)
    assert not det.decisions.any()


def test_cwt_zero_signal_scores_zero():
    det = cwt_detector(sig(np.zeros(200)), threshold=0.5)
    assert np.all(det.scores == 0.0)


def test_cwt_needs_scales():
    with pytest.raises(ValueError):
        cwt_detector(sig(np.zeros(200)), 0.5, freqs=np.array([]))


# -- threshold optimisation --------------------------------------------------

def test_threshold_separable():
    scores = [np.array([0.1, 0.2, 0.9, 1.0]), np.array([0.3, 0.8])]
    labels = [np.array([0, 0, 1, 1], bool), np.array([0, 1], bool)]
    details = optimize_threshold(scores, labels, return_details=True)
    assert details["mean_balanced_accuracy"] == 1.0


def test_threshold_identical_scores_half():
    scores = [np.full(10, 2.0)]
    labels = [np.arange(10) % 2 == 0]
    details = optimize_threshold(scores, labels, return_details=True)
    assert details["mean_balanced_accuracy"] == 0.5


def test_threshold_matches_exhaustive_search(rng):
    for _ in range(50):
        k = int(rng.integers(1, 5))
        scores = [np.round(rng.normal(size=int(rng.integers(5, 30))), 1) for _ in range(k)]
        labels = [rng.random(s.size) < 0.4 for s in scores]
        for l in labels:
            l[0], l[-1] = True, False
        got = optimize_threshold(scores, labels, return_details=True)
        want, value = brute_force_threshold(scores, labels)
        assert got["threshold"] == want
        assert got["mean_balanced_accuracy"] == pytest.approx(value, abs=1e-12)


def test_threshold_excludes_single_class_subject():
    scores = [np.array([0.1, 0.9]), np.array([0.5, 0.6])]
    labels = [np.array([False, True]), np.array([True, True])]
    with pytest.warns(UserWarning):
        details = optimize_threshold(scores, labels, return_details=True)
    assert details["excluded"] == [1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            optimize_threshold([np.ones(3)], [np.ones(3, bool)])


# -- properties --------------------------------------------------------------

DETECTORS = {
    "std": lambda s, th: std_detector(s, th),
    "stft": lambda s, th: stft_detector(s, th),
    "nasc": lambda s, th: nasc_detector(s, 0.05, th),
    "cwt": lambda s, th: cwt_detector(s, th),
}


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    name=st.sampled_from(sorted(DETECTORS)),
    n=st.integers(100, 400),
    t1=st.floats(-1.0, 20.0),
    t2=st.floats(-1.0, 20.0),
)
def test_decisions_monotone_in_threshold(seed, name, n, t1, t2):
    x = np.random.default_rng(seed).normal(size=n)
    lo, hi = sorted((t1, t2))
    det = DETECTORS[name](sig(x), lo)
    raised = det.with_threshold(hi)
    assert not np.any(raised.decisions & ~det.decisions)
    assert not np.any(raised.mask & ~det.mask)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(sorted(DETECTORS)), n=st.integers(100, 400))
def test_scores_invariant_to_sign_flip(seed, name, n):
    x = np.random.default_rng(seed).normal(size=n)
    a = DETECTORS[name](sig(x), 0.0).scores
    b = DETECTORS[name](sig(-x), 0.0).scores
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 500), window=st.integers(1, 120))
def test_windows_tile_signal(n, window):
    if n < window:
        with pytest.raises(ValueError):
            window_bounds(n, window)
        return
    starts, ends = window_bounds(n, window)
    assert starts[0] == 0
    assert np.array_equal(starts[1:], ends[:-1])
    rest = n - (n // window) * window
    assert ends[-1] == (n if 2 * rest >= window else n - rest)
    det = BinaryDetection(starts, window, np.arange(starts.size, dtype=float), 0.5, n, ends)
    assert det.mask.size == n
    # a dropped short tail inherits the last scored window
    assert det.sample_scores[-1] == starts.size - 1

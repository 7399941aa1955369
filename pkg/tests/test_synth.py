import numpy as np
import pytest
from scipy.signal import welch

from gaitseg.signal_prep import preprocess_recording
from gaitseg.synth import (
    CohortSpec,
    RegimeSpec,
    gen_cohort,
    gen_gait_recording,
    gen_piecewise_ar,
    noise_magnitude_std,
    resonance_coeffs,
    spectral_radius,
)

FS = 50.0


def yule_walker_autocov(a1, a2, noise_var):
    rho1 = a1 / (1 - a2)
    rho2 = a1 * rho1 + a2
    gamma0 = noise_var / (1 - a1 * rho1 - a2 * rho2)
    return np.array([gamma0, rho1 * gamma0, rho2 * gamma0])


def test_single_regime_truth_constant():
    sig, truth = gen_piecewise_ar([RegimeSpec(4.0, coeffs=(0.5,))], FS, seed=1)
    assert sig.values.size == 200
    assert np.all(truth == 0)


def test_piecewise_ar_deterministic():
    specs = [RegimeSpec(2.0, coeffs=(0.5,)), RegimeSpec(2.0, kind="harmonic", cadence_hz=2.0, harmonics=(1.0, 0.3))]
    a, ta = gen_piecewise_ar(specs, FS, seed=9)
    b, tb = gen_piecewise_ar(specs, FS, seed=9)
    c, _ = gen_piecewise_ar(specs, FS, seed=10)
    assert np.array_equal(a.values, b.values) and np.array_equal(ta, tb)
    assert not np.array_equal(a.values, c.values)


def test_long_ar2_draw_matches_yule_walker():
    a1, a2 = resonance_coeffs(3.0, FS, 0.9)
    sig, _ = gen_piecewise_ar([RegimeSpec(100_000 / FS, coeffs=(a1, a2), noise_var=1.5)], FS, seed=4)
    x = sig.values - sig.values.mean()
    emp = np.array([x[: x.size - k] @ x[k:] / x.size for k in range(3)])
    want = yule_walker_autocov(a1, a2, 1.5)
    np.testing.assert_allclose(emp, want, rtol=0.05)


def test_non_stationary_regime_rejected():
    assert spectral_radius((1.2,)) > 1
    with pytest.raises(ValueError):
        RegimeSpec(1.0, coeffs=(1.2,))
    with pytest.raises(ValueError):
        RegimeSpec(1.0, coeffs=(0.5, 0.6))


def test_zero_gait_amplitude_leaves_noise_only():
    rec = gen_gait_recording(gait_amplitude=0.0, noise_sigma=0.05, duration_s=120.0, seed=3)
    values = preprocess_recording(rec.recording).values
    # the magnitude of isotropic noise has its own spread, simulated directly
    want = noise_magnitude_std(0.05)
    assert abs(np.std(values) - want) <= 0.1 * want


def test_walking_magnitude_peaks_at_cadence():
    for seed in range(3):
        rec = gen_gait_recording(cadence_hz=1.8, seed=seed, layout_seed=seed)
        r = rec.recording
        mag = np.sqrt(r.ax**2 + r.ay**2 + r.az**2)
        for start, end, _, _ in rec.bouts:
            a, b = int(start * FS), int(end * FS)
            f, p = welch(mag[a:b], fs=FS, nperseg=1024, detrend="linear")
            walking = f >= 0.5
            assert f[walking][np.argmax(p[walking])] == pytest.approx(1.8, abs=0.1)


@pytest.mark.parametrize("fraction,bout", [(0.2, 30.0), (0.35, 20.0), (0.1, 15.0)])
def test_walk_fraction_within_one_bout(fraction, bout):
    rec = gen_gait_recording(walk_fraction=fraction, bout_s=bout, duration_s=300.0, seed=1, layout_seed=2)
    assert abs(rec.gait_mask.mean() - fraction) <= bout / 300.0


def test_seed_changes_samples_not_structure():
    kw = dict(duration_s=200.0, layout_seed=5, activity_fraction=0.1, medication_time_s=100.0)
    a = gen_gait_recording(seed=1, **kw)
    b = gen_gait_recording(seed=2, **kw)
    assert np.array_equal(a.gait_mask, b.gait_mask)
    assert a.annotations == b.annotations
    assert np.array_equal(a.phase, b.phase)
    assert [x[:2] for x in a.bouts] == [x[:2] for x in b.bouts]
    assert not np.array_equal(a.recording.ax, b.recording.ax)


def test_medication_energy_contrast():
    rec = gen_gait_recording(duration_s=240.0, medication_time_s=120.0, after_energy_ratio=2.0, seed=0, layout_seed=0)
    assert {tag for *_, tag in rec.bouts} == {"before", "after"}
    assert rec.recording.sessions == ((0.0, 120.0, "before"), (120.0, 240.0, "after"))


def test_cohort_ids_and_determinism():
    spec = CohortSpec(n_subjects=3, duration_s=60.0, bout_s=10.0)
    a = gen_cohort(spec, seed=2)
    b = gen_cohort(spec, seed=2)
    assert [r.recording.subject_id for r in a] == ["S01", "S02", "S03"]
    for x, y in zip(a, b):
        assert np.array_equal(x.recording.ax, y.recording.ax)

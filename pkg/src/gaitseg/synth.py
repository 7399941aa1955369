"""Synthetic recordings with known ground truth.

Two families are provided: scalar switching-AR signals for checking the
segmentation itself, and tri-axial wrist-style recordings (gravity, slow
orientation drift, walking bouts, rest noise and optional distractors) for
end-to-end evaluation.

Randomness is split in two: ``layout_seed`` fixes the structure (bout
placement, durations, labels) and ``seed`` draws the sample values, so
changing ``seed`` alone never moves a ground-truth boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, lfiltic
from scipy.special import i0

from .evaluation import AnnotationTrack
from .signal_prep import PreprocessedSignal, RawRecording

GRAVITY = 9.81


@dataclass(frozen=True)
class RegimeSpec:
    duration_s: float
    kind: str = "ar"  # "ar" or "harmonic"
    coeffs: tuple = ()
    noise_var: float = 1.0
    cadence_hz: float = 2.0
    harmonics: tuple = (1.0,)
    noise_sigma: float = 0.1
    label: str = "non-gait"
    phase: str = "none"

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("regime duration must be positive")
        if self.kind not in ("ar", "harmonic"):
            raise ValueError(f"unknown regime kind {self.kind!r}")
        if self.kind == "ar":
            if not self.noise_var > 0:
                raise ValueError("noise_var must be positive")
            radius = spectral_radius(self.coeffs)
            if radius >= 1.0:
                raise ValueError(f"AR coefficients {tuple(self.coeffs)} are not stationary (spectral radius {radius:.4f})")


def spectral_radius(coeffs) -> float:
    """Largest root modulus of ``z^r - A_1 z^(r-1) - ... - A_r``."""
    a = np.asarray(coeffs, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.roots(np.concatenate([[1.0], -a])))))


def resonance_coeffs(peak_hz: float, fs: float, radius: float = 0.95) -> tuple[float, float]:
    """AR(2) coefficients with a complex pole pair at ``radius * exp(+-2 pi i peak/fs)``."""
    theta = 2.0 * math.pi * peak_hz / fs
    return (2.0 * radius * math.cos(theta), -radius * radius)


def gen_piecewise_ar(specs, fs: float, seed: int, burn_in: int = 1000) -> tuple[PreprocessedSignal, np.ndarray]:
    """Concatenate regimes into one series; returns the signal and per-sample regime indices.

    AR regimes are drawn as one switching recursion: the first samples of a
    regime regress on the tail of the previous one. The first regime is
    burnt in for ``burn_in`` samples so the series starts in stationarity.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("at least one regime is required")
    rng = np.random.default_rng(seed)
    lengths = [max(int(round(s.duration_s * fs)), 1) for s in specs]
    truth = np.repeat(np.arange(len(specs)), lengths)
    out = np.empty(truth.size)

    history = np.zeros(0)
    first = specs[0]
    if first.kind == "ar" and len(first.coeffs):
        history = lfilter([1.0], np.concatenate([[1.0], -np.asarray(first.coeffs)]),
                          rng.normal(scale=math.sqrt(first.noise_var), size=burn_in))
    pos = 0
    for spec, n in zip(specs, lengths):
        if spec.kind == "ar":
            a = np.asarray(spec.coeffs, dtype=float)
            e = rng.normal(scale=math.sqrt(spec.noise_var), size=n)
            r = a.size
            if r == 0:
                seg = e
            else:
                # continue the recursion from the previous samples
                tail = np.concatenate([history, out[:pos]])[-r:]
                tail = np.concatenate([np.zeros(r - tail.size), tail])
                den = np.concatenate([[1.0], -a])
                seg, _ = lfilter([1.0], den, e, zi=lfiltic([1.0], den, tail[::-1]))
        else:
            t = np.arange(n) / fs
            phase0 = rng.uniform(0, 2 * math.pi)
            seg = sum(
                amp * np.cos(2 * math.pi * (h + 1) * spec.cadence_hz * t + (h + 1) * phase0)
                for h, amp in enumerate(spec.harmonics)
            ) + rng.normal(scale=spec.noise_sigma, size=n)
        out[pos : pos + n] = seg
        pos += n
    return PreprocessedSignal(out, fs), truth


@dataclass(frozen=True)
class DriftSpec:
    """Per-axis piecewise-linear orientation drift."""

    knot_spacing_s: float = 30.0
    amplitude: float = 1.0


@dataclass(frozen=True)
class SyntheticRecording:
    recording: RawRecording
    gait_mask: np.ndarray
    annotations: AnnotationTrack
    phase: np.ndarray  # per-sample "before" / "after" / "none"
    bouts: tuple = field(default_factory=tuple)  # (start_s, end_s, cadence_hz, phase)


def _gait_pulse(phi: np.ndarray, sharpness: float = 3.0) -> np.ndarray:
    """Zero-mean periodic pulse with one sharp peak per step."""
    return np.exp(sharpness * (np.cos(phi) - 1.0)) - i0(sharpness) * math.exp(-sharpness)


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _layout(rng, duration_s, walk_fraction, bout_s, activity_fraction, activity_bout_s):
    """Non-overlapping walking and distractor intervals in seconds."""
    walk_total = walk_fraction * duration_s
    n_bouts = max(1, int(round(walk_total / bout_s)))
    bout_len = walk_total / n_bouts
    act_total = activity_fraction * duration_s
    n_act = int(round(act_total / activity_bout_s)) if act_total > 0 else 0
    act_len = act_total / n_act if n_act else 0.0
    kinds = ["walk"] * n_bouts + ["activity"] * n_act
    rng.shuffle(kinds)
    free = duration_s - walk_total - act_total
    if free <= 0:
        raise ValueError("walking and activity fractions leave no rest time")
    gaps = rng.dirichlet(np.ones(len(kinds) + 1)) * free
    out = []
    t = gaps[0]
    for kind, gap in zip(kinds, gaps[1:]):
        length = bout_len if kind == "walk" else act_len
        out.append((kind, t, t + length))
        t += length + gap
    return out


def gen_gait_recording(
    walk_fraction: float = 0.2,
    cadence_hz: float = 1.8,
    drift: DriftSpec | None = None,
    fs: float = 50.0,
    seed: int = 0,
    duration_s: float = 360.0,
    gait_amplitude: float = 2.0,
    noise_sigma: float = 0.05,
    bout_s: float = 30.0,
    layout_seed: int = 0,
    medication_time_s: float | None = None,
    after_energy_ratio: float = 2.0,
    after_cadence_hz: float | None = None,
    activity_fraction: float = 0.0,
    activity_bout_s: float = 15.0,
    activity_hz: float = 14.0,
    activity_amplitude: float = 1.5,
    bump_rate_hz: float = 0.0,
    bump_amplitude: float = 3.0,
    turn_interval_s: float = 0.0,
    bout_cadence_sd: float = 0.0,
    bout_amplitude_sd: float = 0.0,
    subject_id: str = "",
) -> SyntheticRecording:
    """Tri-axial recording: gravity + drift + walking bouts + rest noise (+ distractors).

    Walking is a pulse train at ``cadence_hz`` projected on a per-bout
    direction. When ``medication_time_s`` is given, recording time before it
    is tagged ``before`` and after it ``after``; bouts after intake get
    ``after_energy_ratio`` times the band energy (and ``after_cadence_hz``
    if set). Distractors: high-frequency vibration bouts
    (``activity_fraction``), short impulsive bumps during rest
    (``bump_rate_hz``) and brief amplitude dips for turns while walking
    (``turn_interval_s``). ``bout_cadence_sd`` and ``bout_amplitude_sd``
    (relative) vary cadence and amplitude from bout to bout.
    """
    if not 0 < walk_fraction < 1:
        raise ValueError("walk_fraction must lie in (0, 1)")
    drift = drift or DriftSpec()
    layout_rng = np.random.default_rng(layout_seed)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs

    if medication_time_s is None:
        intervals = _layout(layout_rng, duration_s, walk_fraction, bout_s, activity_fraction, activity_bout_s)
    else:
        # lay out each session separately so both contain walking
        intervals = _layout(layout_rng, medication_time_s, walk_fraction, bout_s, activity_fraction, activity_bout_s)
        intervals += [
            (kind, medication_time_s + a, medication_time_s + b)
            for kind, a, b in _layout(
                layout_rng, duration_s - medication_time_s, walk_fraction, bout_s, activity_fraction, activity_bout_s
            )
        ]

    axes = np.zeros((3, n))
    gravity_dir = _random_unit(rng)
    axes += GRAVITY * gravity_dir[:, None]
    n_knots = max(int(math.ceil(duration_s / drift.knot_spacing_s)), 1) + 1
    knot_t = np.linspace(0.0, t[-1] if n > 1 else 0.0, n_knots)
    for k in range(3):
        knots = rng.uniform(-drift.amplitude, drift.amplitude, size=n_knots)
        axes[k] += np.interp(t, knot_t, knots)
    axes += rng.normal(scale=noise_sigma, size=(3, n))

    mask = np.zeros(n, dtype=bool)
    phase = np.full(n, "none", dtype=object)
    if medication_time_s is not None:
        phase[:] = np.where(t < medication_time_s, "before", "after")

    bouts = []
    for kind, start, end in intervals:
        a, b = int(round(start * fs)), int(round(end * fs))
        if b <= a:
            continue
        seg_t = t[a:b] - t[a]
        direction = _random_unit(rng)
        if kind == "walk":
            after = medication_time_s is not None and start >= medication_time_s
            amp = gait_amplitude * (math.sqrt(after_energy_ratio) if after else 1.0)
            amp *= max(1.0 + bout_amplitude_sd * rng.normal(), 0.2)
            cad = after_cadence_hz if (after and after_cadence_hz) else cadence_hz
            cad = max(cad + bout_cadence_sd * rng.normal(), 0.3)
            # slow cadence wander of a few percent
            wander = 1.0 + 0.03 * np.cumsum(rng.normal(size=seg_t.size)) / math.sqrt(max(seg_t.size, 1))
            phi = 2 * math.pi * np.cumsum(cad * wander) / fs + rng.uniform(0, 2 * math.pi)
            envelope = np.ones(seg_t.size)
            if turn_interval_s > 0:
                for turn in np.arange(turn_interval_s, seg_t[-1] - 1.0, turn_interval_s):
                    envelope -= 0.6 * np.exp(-0.5 * ((seg_t - turn) / 0.5) ** 2)
            axes[:, a:b] += direction[:, None] * (amp * envelope * _gait_pulse(phi))[None, :]
            mask[a:b] = True
            tag = "after" if after else ("before" if medication_time_s is not None else "none")
            bouts.append((start, end, float(cad), tag))
        else:
            vib = activity_amplitude * np.sin(2 * math.pi * activity_hz * seg_t + rng.uniform(0, 2 * math.pi))
            vib *= 1.0 + 0.3 * np.sin(2 * math.pi * 0.2 * seg_t)
            axes[:, a:b] += direction[:, None] * vib[None, :]

    if bump_rate_hz > 0:
        n_bumps = rng.poisson(bump_rate_hz * duration_s)
        width = max(int(0.15 * fs), 1)
        kernel = np.hanning(width + 2)[1:-1]
        for centre in rng.integers(0, max(n - width, 1), size=n_bumps):
            if mask[centre : centre + width].any():
                continue
            axes[:, centre : centre + width] += (
                bump_amplitude * rng.uniform(0.5, 1.0) * _random_unit(rng)[:, None] * kernel[None, :]
            )

    sessions = ()
    if medication_time_s is not None:
        sessions = ((0.0, float(medication_time_s), "before"), (float(medication_time_s), float(duration_s), "after"))
    rec = RawRecording(t, axes[0], axes[1], axes[2], subject_id=subject_id, sessions=sessions)
    return SyntheticRecording(rec, mask, AnnotationTrack.from_mask(mask, fs), phase, tuple(bouts))


def noise_magnitude_std(noise_sigma: float, n: int = 200_000, seed: int = 0) -> float:
    """Standard deviation of the magnitude of isotropic 3-D Gaussian noise, by simulation."""
    rng = np.random.default_rng(seed)
    return float(np.std(np.linalg.norm(rng.normal(scale=noise_sigma, size=(n, 3)), axis=1)))


@dataclass(frozen=True)
class CohortSpec:
    n_subjects: int = 10
    duration_s: float = 360.0
    walk_fraction: float = 0.2
    fs: float = 50.0
    cadence_range: tuple = (1.6, 2.1)
    amplitude_range: tuple = (1.5, 3.0)
    noise_range: tuple = (0.03, 0.08)
    activity_fraction: float = 0.1
    bump_rate_hz: float = 0.05
    turn_interval_s: float = 8.0
    bout_s: float = 30.0
    bout_cadence_sd: float = 0.1
    bout_amplitude_sd: float = 0.1
    medication: bool = False
    after_energy_ratio: float = 2.0
    cadence_contrast_hz: float = 0.0


def gen_cohort(spec: CohortSpec, seed: int = 0) -> list[SyntheticRecording]:
    """Subjects ``S01..`` with per-subject cadence, gait amplitude and noise level."""
    cohort_rng = np.random.default_rng([seed, 7])
    out = []
    for i in range(spec.n_subjects):
        cadence = float(cohort_rng.uniform(*spec.cadence_range))
        amplitude = float(cohort_rng.uniform(*spec.amplitude_range))
        noise = float(cohort_rng.uniform(*spec.noise_range))
        med_time = spec.duration_s / 2.0 if spec.medication else None
        after_cad = cadence + spec.cadence_contrast_hz if spec.cadence_contrast_hz else None
        out.append(
            gen_gait_recording(
                walk_fraction=spec.walk_fraction,
                cadence_hz=cadence,
                fs=spec.fs,
                seed=int(cohort_rng.integers(2**31)),
                duration_s=spec.duration_s,
                gait_amplitude=amplitude,
                noise_sigma=noise,
                layout_seed=seed * 1000 + i,
                medication_time_s=med_time,
                after_energy_ratio=spec.after_energy_ratio if spec.medication else 1.0,
                after_cadence_hz=after_cad,
                activity_fraction=spec.activity_fraction,
                bump_rate_hz=spec.bump_rate_hz,
                turn_interval_s=spec.turn_interval_s,
                bout_s=spec.bout_s,
                bout_cadence_sd=spec.bout_cadence_sd,
                bout_amplitude_sd=spec.bout_amplitude_sd,
                subject_id=f"S{i + 1:02d}",
            )
        )
    return out

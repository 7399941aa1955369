"""Gait labelling of segmentation states and medication-phase classification."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ar import ar_psd, psd_features
from .evaluation import LOSOReport, SubjectScores, loso_evaluate
from .switching import SegmentationResult

ENERGY_BAND = (0.5, 10.0)
FEATURES = ("band_energy", "peak_position", "peak_height")
CSV_COLUMNS = ("subject", "start_s", "end_s", "state", "band_energy", "peak_pos_hz", "peak_height", "phase")


@dataclass(frozen=True)
class GaitSegment:
    start: int
    end: int
    state: int
    band_energy: float
    peak_position: float
    peak_height: float
    subject: str = ""
    phase: str | None = None
    sample_rate: float = 50.0
    origin_time: float = 0.0

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("segment end must exceed its start")
        if not np.all(np.isfinite(self.features())):
            raise ValueError("segment features must be finite")

    def features(self, names: Sequence[str] = FEATURES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=float)

    @property
    def start_s(self) -> float:
        return self.origin_time + self.start / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.origin_time + self.end / self.sample_rate

    @property
    def duration_s(self) -> float:
        return (self.end - self.start) / self.sample_rate


def state_features(seg: SegmentationResult, band=ENERGY_BAND, n_grid: int = 1024) -> dict:
    """``psd_features`` of every state's AR spectrum."""
    fs = seg.sample_rate
    return {sid: psd_features(ar_psd(p, fs, n_grid), *band) for sid, p in seg.states.items()}


def label_states_gait(seg: SegmentationResult, energy_threshold: float, band=ENERGY_BAND) -> tuple[dict, np.ndarray]:
    """Flag states whose band energy reaches ``energy_threshold``; return the flags and the sample mask.

    The mask covers the cleaned segments (after short-run absorption) owned
    by gait states.
    """
    feats = state_features(seg, band)
    flags = {sid: f["band_energy"] >= energy_threshold for sid, f in feats.items()}
    mask = np.zeros(len(seg.labels), dtype=bool)
    for start, end, state in seg.segments:
        if flags[state]:
            mask[start:end] = True
    return flags, mask


def _phase_of(start_s: float, end_s: float, sessions) -> str | None:
    for lo, hi, label in sessions:
        if start_s >= lo and end_s <= hi:
            return label
    return None


def gait_features(
    seg: SegmentationResult,
    gait_states: dict,
    subject: str = "",
    sessions=(),
    origin_time: float = 0.0,
    band=ENERGY_BAND,
) -> list[GaitSegment]:
    """One :class:`GaitSegment` per contiguous run of a gait state.

    ``sessions`` holds ``(start_s, end_s, label)`` tags; a segment gets the
    label of the session containing it entirely and ``None`` when it
    straddles a boundary.
    """
    feats = state_features(seg, band)
    fs = seg.sample_rate
    out = []
    for start, end, state in seg.segments:
        if not gait_states.get(state, False):
            continue
        f = feats[state]
        t0, t1 = origin_time + start / fs, origin_time + end / fs
        out.append(
            GaitSegment(
                start=start,
                end=end,
                state=state,
                band_energy=f["band_energy"],
                peak_position=f["peak_position"],
                peak_height=f["peak_height"],
                subject=subject,
                phase=_phase_of(t0, t1, sessions) if sessions else None,
                sample_rate=fs,
                origin_time=origin_time,
            )
        )
    return out


def zscore_per_subject(segments: Sequence[GaitSegment], names: Sequence[str] = FEATURES) -> list[GaitSegment]:
    """Standardise each feature within each subject (population std); constant features become 0."""
    by_subject: dict[str, list[int]] = {}
    for i, s in enumerate(segments):
        by_subject.setdefault(s.subject, []).append(i)
    out = list(segments)
    for subject, idx in by_subject.items():
        values = np.array([[getattr(segments[i], n) for n in names] for i in idx], dtype=float)
        if len(idx) < 2:
            warnings.warn(f"subject {subject!r} has a single segment; its features are set to 0")
            z = np.zeros_like(values)
        else:
            mean = values.mean(axis=0)
            std = values.std(axis=0)
            safe = np.where(std > 0, std, 1.0)
            z = np.where(std > 0, (values - mean) / safe, 0.0)
        for row, i in zip(z, idx):
            out[i] = replace(segments[i], **dict(zip(names, map(float, row))))
    return out


@dataclass(frozen=True)
class LogisticModel:
    features: tuple
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size != len(self.features):
            raise ValueError("one weight per feature is required")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "bias", float(self.bias))

    def to_dict(self) -> dict:
        return {"features": list(self.features), "weights": self.weights.tolist(), "bias": self.bias}


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean log loss plus ``l2/2 * ||w||^2`` (bias unpenalised)."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * w @ w)


def logistic_gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    r = _sigmoid(X @ w + b) - y
    return X.T @ r / y.size + l2 * w, float(np.mean(r))


def _labelled(segments: Sequence[GaitSegment]) -> list[GaitSegment]:
    return [s for s in segments if s.phase in ("before", "after")]


def logistic_train(
    segments: Sequence[GaitSegment],
    features: Sequence[str] = ("band_energy",),
    l2_weight: float = 1e-3,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 200_000,
) -> LogisticModel:
    """Gradient descent with step ``1/L`` on the regularised logistic loss ("after" is the positive class)."""
    data = _labelled(segments)
    X = np.array([s.features(features) for s in data], dtype=float).reshape(len(data), len(features))
    y = np.array([s.phase == "after" for s in data], dtype=float)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("training data must contain both before and after segments")
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=1e-3, size=len(features))
    b = 0.0
    aug = np.column_stack([X, np.ones(y.size)])
    lipschitz = np.linalg.eigvalsh(aug.T @ aug).max() / (4.0 * y.size) + l2_weight
    step = 1.0 / lipschitz
    for _ in range(max_iter):
        gw, gb = logistic_gradient(w, b, X, y, l2_weight)
        if np.sqrt(gw @ gw + gb * gb) <= tol:
            break
        w = w - step * gw
        b = b - step * gb
    else:
        warnings.warn("logistic regression stopped at the iteration cap")
    return LogisticModel(tuple(features), w, b)


def logistic_predict(model: LogisticModel, segment) -> float:
    """Probability that ``segment`` (a GaitSegment or raw feature vector) is after medication."""
    if isinstance(segment, GaitSegment):
        x = segment.features(model.features)
    else:
        x = np.asarray(segment, dtype=float).reshape(-1)
        if x.size != model.weights.size:
            raise ValueError(f"expected {model.weights.size} features, got {x.size}")
    return float(_sigmoid(x @ model.weights + model.bias))


def eligible_subjects(segments: Sequence[GaitSegment], min_gait_seconds: float = 120.0) -> list[str]:
    """Subjects with at least ``min_gait_seconds`` of phase-labelled gait and both phases present."""
    totals: dict[str, float] = {}
    phases: dict[str, set] = {}
    for s in _labelled(segments):
        totals[s.subject] = totals.get(s.subject, 0.0) + s.duration_s
        phases.setdefault(s.subject, set()).add(s.phase)
    return sorted(k for k, v in totals.items() if v >= min_gait_seconds and phases[k] == {"before", "after"})


def classify_loso(
    segments: Sequence[GaitSegment],
    features: Sequence[str] = ("band_energy",),
    l2_weight: float = 1e-3,
    seed: int = 0,
    min_gait_seconds: float = 120.0,
) -> LOSOReport:
    """Per-subject z-scoring, then leave-one-subject-out logistic classification of segment phase."""
    keep = set(eligible_subjects(segments, min_gait_seconds))
    normed = zscore_per_subject([s for s in _labelled(segments) if s.subject in keep])
    cohort = []
    by_subject: dict[str, list[GaitSegment]] = {}
    for s in normed:
        by_subject.setdefault(s.subject, []).append(s)
    for subject in sorted(by_subject):
        segs = by_subject[subject]
        cohort.append(
            SubjectScores(subject, np.array(segs, dtype=object), np.array([s.phase == "after" for s in segs]))
        )

    def fit(train):
        return logistic_train([s for subj in train for s in subj.scores], features, l2_weight, seed)

    def predict(model, subject):
        return np.array([logistic_predict(model, s) >= 0.5 for s in subject.scores])

    return loso_evaluate(cohort, fit, predict)


def write_segments_csv(path, segments: Sequence[GaitSegment]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in segments:
            writer.writerow(
                [
                    s.subject,
                    f"{s.start_s:.6f}",
                    f"{s.end_s:.6f}",
                    s.state,
                    repr(float(s.band_energy)),
                    repr(float(s.peak_position)),
                    repr(float(s.peak_height)),
                    s.phase or "",
                ]
            )


def read_segments_csv(path, sample_rate: float = 50.0) -> list[GaitSegment]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            start_s, end_s = float(row["start_s"]), float(row["end_s"])
            out.append(
                GaitSegment(
                    start=int(round(start_s * sample_rate)),
                    end=int(round(end_s * sample_rate)),
                    state=int(row["state"]),
                    band_energy=float(row["band_energy"]),
                    peak_position=float(row["peak_pos_hz"]),
                    peak_height=float(row["peak_height"]),
                    subject=row["subject"],
                    phase=row["phase"] or None,
                    sample_rate=sample_rate,
                )
            )
    return out

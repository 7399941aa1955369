"""Sample-level metrics, ROC analysis and leave-one-subject-out evaluation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detectors import optimize_threshold

GAIT = "gait"
NON_GAIT = "non-gait"


@dataclass(frozen=True)
class AnnotationTrack:
    """Labelled time intervals, half-open ``[start, end)`` in seconds."""

    intervals: tuple = ()

    def __post_init__(self):
        cleaned = []
        for start, end, label in self.intervals:
            start, end = float(start), float(end)
            if not start < end:
                raise ValueError(f"interval [{start}, {end}) must have start < end")
            if label not in (GAIT, NON_GAIT):
                raise ValueError(f"unknown annotation label {label!r}")
            cleaned.append((start, end, label))
        object.__setattr__(self, "intervals", tuple(cleaned))

    @classmethod
    def from_mask(cls, mask, fs: float, origin: float = 0.0) -> "AnnotationTrack":
        """Gait intervals covering the true runs of a per-sample mask."""
        m = np.asarray(mask, dtype=bool)
        padded = np.concatenate([[False], m, [False]]).astype(np.int8)
        edges = np.diff(padded)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        return cls(tuple((origin + a / fs, origin + b / fs, GAIT) for a, b in zip(starts, ends)))


def rasterize_annotations(track: AnnotationTrack, fs: float, length: int, origin: float = 0.0) -> np.ndarray:
    """Per-sample gait mask: sample ``i`` is gait when ``origin + i/fs`` lies in a gait interval."""
    t = origin + np.arange(length) / fs
    end_time = origin + length / fs
    tol = 1e-9 * max(1.0, abs(end_time))
    mask = np.zeros(length, dtype=bool)
    for start, end, label in track.intervals:
        if start < origin - tol or end > end_time + tol:
            raise ValueError(
                f"interval [{start}, {end}) lies outside the recording span [{origin}, {end_time}]"
            )
        if label == GAIT:
            mask |= (t >= start) & (t < end)
    return mask


@dataclass(frozen=True)
class ROCCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(th), float(f), float(t)) for th, f, t in zip(self.thresholds, self.fpr, self.tpr)]


@dataclass
class MetricsReport:
    """Confusion-derived rates; an undefined rate is ``None`` and ``single_class`` is set."""

    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float | None
    specificity: float | None
    balanced_accuracy: float
    single_class: bool = False
    roc: ROCCurve | None = None
    folds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "balanced_accuracy": self.balanced_accuracy,
            "single_class": self.single_class,
        }
        if self.roc is not None:
            out["auc"] = self.roc.auc
        if self.folds:
            out["folds"] = self.folds
        return out


def confusion_metrics(predicted, truth) -> MetricsReport:
    p = np.asarray(predicted, dtype=bool).ravel()
    y = np.asarray(truth, dtype=bool).ravel()
    if p.shape != y.shape:
        raise ValueError(f"predicted ({p.size}) and truth ({y.size}) lengths differ")
    tp = int(np.count_nonzero(p & y))
    fn = int(np.count_nonzero(~p & y))
    tn = int(np.count_nonzero(~p & ~y))
    fp = int(np.count_nonzero(p & ~y))
    sens = tp / (tp + fn) if tp + fn else None
    spec = tn / (tn + fp) if tn + fp else None
    defined = [v for v in (sens, spec) if v is not None]
    balanced = sum(defined) / len(defined) if defined else float("nan")
    return MetricsReport(tp, fp, tn, fn, sens, spec, balanced, single_class=len(defined) < 2)


def roc_curve(scores, truth) -> ROCCurve:
    """Threshold sweep over the distinct scores, highest first, predicting ``score >= threshold``."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(truth, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and truth must have equal length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs both classes in the truth labels")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(~y_sorted)
    last_of_value = np.flatnonzero(np.diff(s_sorted) != 0)
    last_of_value = np.append(last_of_value, s_sorted.size - 1)
    tpr = np.concatenate([[0.0], tps[last_of_value] / n_pos])
    fpr = np.concatenate([[0.0], fps[last_of_value] / n_neg])
    thresholds = np.concatenate([[np.inf], s_sorted[last_of_value]])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return ROCCurve(fpr, tpr, thresholds, auc)


@dataclass(frozen=True)
class SubjectScores:
    subject_id: str
    scores: np.ndarray
    truth: np.ndarray


@dataclass
class LOSOReport:
    per_subject: dict
    models: dict
    mean_balanced_accuracy: float
    std_balanced_accuracy: float
    skipped: list = field(default_factory=list)
    folds_run: int = 0

    def to_dict(self) -> dict:
        return {
            "per_subject": {k: v.to_dict() for k, v in sorted(self.per_subject.items())},
            "models": {k: _jsonable(v) for k, v in sorted(self.models.items())},
            "mean_balanced_accuracy": self.mean_balanced_accuracy,
            "std_balanced_accuracy": self.std_balanced_accuracy,
            "skipped": list(self.skipped),
            "folds_run": self.folds_run,
        }


def _jsonable(value):
    if isinstance(value, (float, int, str)) or value is None:
        return value
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return repr(value)


def _fit_threshold(train: Sequence[SubjectScores]):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return optimize_threshold([s.scores for s in train], [s.truth for s in train])


def _apply_threshold(threshold, subject: SubjectScores) -> np.ndarray:
    return np.asarray(subject.scores) >= threshold


def summarize(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), std


def loso_evaluate(
    cohort: Sequence[SubjectScores],
    fit: Callable | None = None,
    predict: Callable | None = None,
) -> LOSOReport:
    """Leave-one-subject-out evaluation.

    ``fit(train_subjects)`` returns a model (by default a detection
    threshold from :func:`optimize_threshold`) and ``predict(model,
    subject)`` returns the predicted mask for the held-out subject.
    Subjects whose truth holds one class only are not evaluated.
    """
    if len(cohort) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    ids = [s.subject_id for s in cohort]
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    fit = fit or _fit_threshold
    predict = predict or _apply_threshold
    ordered = sorted(cohort, key=lambda s: s.subject_id)
    per_subject, models, skipped = {}, {}, []
    folds = 0
    for held in ordered:
        truth = np.asarray(held.truth, dtype=bool)
        if truth.all() or not truth.any():
            skipped.append({"subject": held.subject_id, "reason": "single-class truth"})
            continue
        train = [s for s in ordered if s.subject_id != held.subject_id]
        model = fit(train)
        folds += 1
        models[held.subject_id] = model
        per_subject[held.subject_id] = confusion_metrics(predict(model, held), truth)
    mean, std = summarize(m.balanced_accuracy for m in per_subject.values())
    return LOSOReport(per_subject, models, mean, std, skipped, folds)

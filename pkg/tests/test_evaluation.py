import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitseg.evaluation import (
    AnnotationTrack,
    SubjectScores,
    confusion_metrics,
    loso_evaluate,
    rasterize_annotations,
    roc_curve,
)
from oracles import loop_confusion, pairwise_auc


def test_rasterize_one_second():
    mask = rasterize_annotations(AnnotationTrack(((1.0, 2.0, "gait"),)), 50.0, 200)
    assert np.array_equal(np.flatnonzero(mask), np.arange(50, 100))


def test_rasterize_empty_and_union():
    assert not rasterize_annotations(AnnotationTrack(), 50.0, 100).any()
    track = AnnotationTrack(((0.5, 1.5, "gait"), (1.0, 1.8, "gait"), (0.0, 0.4, "non-gait")))
    mask = rasterize_annotations(track, 10.0, 20)
    assert np.array_equal(np.flatnonzero(mask), np.arange(5, 18))


def test_rasterize_rejects_out_of_range():
    with pytest.raises(ValueError, match=r"\[3.0, 5.0\)"):
        rasterize_annotations(AnnotationTrack(((3.0, 5.0, "gait"),)), 1.0, 4)


def test_track_validation():
    with pytest.raises(ValueError):
        AnnotationTrack(((2.0, 1.0, "gait"),))
    with pytest.raises(ValueError):
        AnnotationTrack(((0.0, 1.0, "running"),))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=200))
def test_mask_track_round_trip(bits):
    mask = np.array(bits)
    track = AnnotationTrack.from_mask(mask, 50.0)
    assert np.array_equal(rasterize_annotations(track, 50.0, mask.size), mask)


def test_confusion_examples():
    truth = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0], bool)
    m = confusion_metrics(truth, truth)
    assert (m.sensitivity, m.specificity) == (1.0, 1.0)
    m = confusion_metrics(~truth, truth)
    assert (m.sensitivity, m.specificity) == (0.0, 0.0)
    pred = np.array([1, 1, 1, 1, 0, 1, 1, 0, 0, 0], bool)
    m = confusion_metrics(pred, truth)
    assert m.sensitivity == pytest.approx(0.8) and m.specificity == pytest.approx(0.6)
    assert m.balanced_accuracy == pytest.approx(0.7, abs=1e-12)


def test_confusion_single_class():
    m = confusion_metrics([True, False, True], [True, True, True])
    assert m.specificity is None and m.single_class
    assert m.balanced_accuracy == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        confusion_metrics([True], [True, False])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=2, max_size=300))
def test_confusion_counts_match_loop(pairs):
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    m = confusion_metrics(pred, truth)
    counts = loop_confusion(pred, truth)
    assert (m.tp, m.fp, m.tn, m.fn) == (counts["tp"], counts["fp"], counts["tn"], counts["fn"])
    assert m.tp + m.fp + m.tn + m.fn == len(pairs)
    if not m.single_class:
        assert m.balanced_accuracy == pytest.approx((m.sensitivity + m.specificity) / 2, abs=1e-12)


def test_metrics_prevalence_independent(rng):
    truth = rng.random(500) < 0.3
    pred = truth ^ (rng.random(500) < 0.2)
    a = confusion_metrics(pred, truth)
    neg = ~truth
    b = confusion_metrics(np.concatenate([pred, pred[neg]]), np.concatenate([truth, truth[neg]]))
    assert (a.sensitivity, a.specificity) == (b.sensitivity, b.specificity)


def test_roc_perfect_ranking():
    roc = roc_curve([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
    assert roc.auc == 1.0


def test_roc_auc_matches_pairwise(rng):
    scores = np.round(rng.normal(size=200), 1)
    truth = rng.random(200) < 0.4
    assert roc_curve(scores, truth).auc == pytest.approx(pairwise_auc(scores, truth), abs=1e-12)


def test_roc_single_class_rejected():
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [True, True])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 300))
def test_roc_endpoints_and_monotone(seed, n):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
    truth = rng.random(n) < 0.5
    truth[0], truth[-1] = True, False
    roc = roc_curve(scores, truth)
    assert (roc.fpr[0], roc.tpr[0]) == (0.0, 0.0)
    assert (roc.fpr[-1], roc.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 200), power=st.sampled_from([1, 3, 5]))
def test_roc_invariant_to_monotone_transform(seed, n, power):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.normal(size=n), 1)
    truth = rng.random(n) < 0.5
    truth[0], truth[-1] = True, False
    a = roc_curve(scores, truth)
    b = roc_curve(np.exp(scores) ** power + 7.0, truth)
    np.testing.assert_array_equal(a.fpr, b.fpr)
    np.testing.assert_array_equal(a.tpr, b.tpr)
    assert a.auc == b.auc


def cohort(rng, n_subjects=5, n=300):
    out = []
    for i in range(n_subjects):
        truth = rng.random(n) < 0.3
        scores = truth * 1.0 + rng.normal(scale=0.8, size=n)
        out.append(SubjectScores(f"S{i:02d}", scores, truth))
    return out


def test_loso_runs_one_fold_per_subject(rng):
    report = loso_evaluate(cohort(rng, 6))
    assert report.folds_run == 6
    assert sorted(report.per_subject) == [f"S{i:02d}" for i in range(6)]


def test_loso_identical_subjects(rng):
    base = cohort(rng, 1)[0]
    subjects = [SubjectScores(f"S{i}", base.scores, base.truth) for i in range(4)]
    report = loso_evaluate(subjects)
    assert len(set(report.models.values())) == 1
    assert len({m.balanced_accuracy for m in report.per_subject.values()}) == 1
    assert report.std_balanced_accuracy == 0.0


def test_loso_never_sees_held_out_subject(rng):
    subjects = cohort(rng, 5)
    seen = []

    def fit(train):
        seen.append({s.subject_id for s in train})
        return 0.5

    report = loso_evaluate(subjects, fit=fit)
    for held, train in zip(sorted(report.per_subject), seen):
        assert held not in train
        assert len(train) == 4


def test_loso_order_invariant(rng):
    subjects = cohort(rng, 5)
    a = loso_evaluate(subjects)
    b = loso_evaluate(subjects[::-1])
    assert a.to_dict() == b.to_dict()


def test_loso_skips_single_class_subject(rng):
    subjects = cohort(rng, 3) + [SubjectScores("Z", np.zeros(10), np.zeros(10, bool))]
    report = loso_evaluate(subjects)
    assert report.skipped == [{"subject": "Z", "reason": "single-class truth"}]
    assert report.folds_run == 3
    with pytest.raises(ValueError):
        loso_evaluate(subjects[:1])

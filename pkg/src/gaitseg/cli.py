"""Command-line front end.

Layout of a dataset directory::

    <subject>.csv               t,ax,ay,az
    <subject>.annotations.csv   start,end,label   (optional; gait / non-gait)
    <subject>.sessions.csv      start,end,label   (optional; before / after)

Every stage reads the data directory and writes into the work directory,
computing any missing upstream artifact on the way. Exit codes: 0 success,
1 runtime failure, 2 usage error, 3 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import classify_loso, gait_features, label_states_gait, state_features, write_segments_csv
from .config import ConfigError, PipelineConfig, load_config
from .detectors import cwt_detector, nasc_detector, optimize_threshold, std_detector, stft_detector
from .evaluation import AnnotationTrack, SubjectScores, loso_evaluate, rasterize_annotations, roc_curve, summarize
from .io import (
    load_recording_csv,
    read_annotations_csv,
    read_intervals_csv,
    read_json,
    timeline_svg,
    write_intervals_csv,
    write_json,
    write_recording_csv,
)
from .signal_prep import PreprocessedSignal, preprocess_blocks
from .switching import SegmentationResult, infer_segmentation
from .synth import CohortSpec, gen_cohort

SUBCOMMANDS = ("preprocess", "segment", "detect", "classify", "evaluate", "synth", "report")
BASELINES = ("std", "stft", "nasc", "cwt")
METHODS = ("arihmm",) + BASELINES


# -- dataset discovery ----------------------------------------------------------


def list_subjects(data_dir: Path) -> list[str]:
    names = []
    for p in sorted(data_dir.glob("*.csv")):
        stem = p.name[: -len(".csv")]
        if "." not in stem:
            names.append(stem)
    if not names:
        raise FileNotFoundError(f"no recordings found in {data_dir}")
    return names


def _sessions(data_dir: Path, subject: str):
    path = data_dir / f"{subject}.sessions.csv"
    return tuple(read_intervals_csv(path)) if path.exists() else ()


def _annotations(data_dir: Path, subject: str):
    path = data_dir / f"{subject}.annotations.csv"
    return read_annotations_csv(path) if path.exists() else None


# -- stages -------------------------------------------------------------------------


def _preprocess_one(args) -> str:
    data_dir, subject, cfg = args
    rec = load_recording_csv(data_dir / f"{subject}.csv", subject_id=subject)
    blocks = preprocess_blocks(rec, cfg.sample_rate, cfg.trend_lambda, cfg.lambda0, cfg.max_gap_s)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("block", "t", "magnitude"))
    for b, sig in enumerate(blocks):
        for t, v in zip(sig.times, sig.values):
            w.writerow((b, repr(float(t)), repr(float(v))))
    return buf.getvalue()


def load_signals(work_dir: Path, subject: str, fs: float) -> list[PreprocessedSignal]:
    blocks: dict[int, list] = {}
    with open(work_dir / f"{subject}.signal.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            blocks.setdefault(int(row["block"]), []).append((float(row["t"]), float(row["magnitude"])))
    out = []
    for b in sorted(blocks):
        rows = blocks[b]
        out.append(PreprocessedSignal(np.array([v for _, v in rows]), fs, origin_time=rows[0][0]))
    return out


def _segment_one(args) -> dict:
    work_dir, subject, cfg = args
    blocks = []
    for sig in load_signals(work_dir, subject, cfg.sample_rate):
        if len(sig) < _min_block(cfg):
            continue
        res = infer_segmentation(sig, cfg.segmentation())
        blocks.append({"origin_time": sig.origin_time, "n_samples": len(sig), "result": res.to_dict()})
    return {"subject": subject, "blocks": blocks, "config": cfg.to_dict(), "seed": cfg.seed}


def _min_block(cfg) -> int:
    return 2 * cfg.ar_order + 3


def load_segmentation(work_dir: Path, subject: str) -> list[tuple[float, SegmentationResult]]:
    payload = read_json(work_dir / f"{subject}.segmentation.json")
    return [(b["origin_time"], SegmentationResult.from_dict(b["result"])) for b in payload["blocks"]]


def _run(fn, tasks, jobs: int) -> list:
    """Map ``fn`` over subjects; results come back in task order whatever the worker count."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def stage_preprocess(data_dir, work_dir, cfg, jobs, subjects):
    texts = _run(_preprocess_one, [(data_dir, s, cfg) for s in subjects], jobs)
    for s, text in zip(subjects, texts):
        (work_dir / f"{s}.signal.csv").write_text(text, encoding="utf-8")


def _ensure_signals(data_dir, work_dir, cfg, jobs, subjects):
    missing = [s for s in subjects if not (work_dir / f"{s}.signal.csv").exists()]
    if missing:
        stage_preprocess(data_dir, work_dir, cfg, jobs, missing)


def stage_segment(data_dir, work_dir, cfg, jobs, subjects):
    _ensure_signals(data_dir, work_dir, cfg, jobs, subjects)
    payloads = _run(_segment_one, [(work_dir, s, cfg) for s in subjects], jobs)
    for s, payload in zip(subjects, payloads):
        write_json(work_dir / f"{s}.segmentation.json", payload)
    energy = _energy_threshold(data_dir, work_dir, cfg, subjects, required=False)
    for s in subjects:
        blocks = load_segmentation(work_dir, s)
        gait = [
            set() if energy is None
            else {sid for sid, flag in label_states_gait(res, energy, (cfg.band_lo, cfg.band_hi))[0].items() if flag}
            for _, res in blocks
        ]
        svg = timeline_svg(
            [(origin, res.segments) for origin, res in blocks], cfg.sample_rate, gait,
            title=f"{s}: segmentation timeline (underlined states are gait)",
        )
        (work_dir / f"{s}.timeline.svg").write_text(svg, encoding="utf-8")


def _ensure_segmentation(data_dir, work_dir, cfg, jobs, subjects):
    missing = [s for s in subjects if not (work_dir / f"{s}.segmentation.json").exists()]
    if missing:
        stage_segment(data_dir, work_dir, cfg, jobs, missing)


def _arihmm_scores(blocks, cfg) -> list[np.ndarray]:
    out = []
    for _, res in blocks:
        feats = state_features(res, (cfg.band_lo, cfg.band_hi))
        scores = np.zeros(len(res.labels))
        for start, end, state in res.segments:
            scores[start:end] = feats[state]["band_energy"]
        out.append(scores)
    return out


def _baseline_detections(sig: PreprocessedSignal, cfg: PipelineConfig) -> dict:
    return {
        "std": std_detector(sig, cfg.std_threshold or 0.0, cfg.std_window_s),
        "stft": stft_detector(sig, cfg.stft_threshold or 0.0, cfg.stft_window_s, (cfg.band_lo, cfg.band_hi)),
        "nasc": nasc_detector(sig, cfg.nasc_std_threshold, cfg.nasc_threshold or 0.0, cfg.nasc_window_s),
        "cwt": cwt_detector(sig, cfg.cwt_threshold or 0.0, cfg.cwt_window_s, (cfg.walk_band_lo, cfg.walk_band_hi)),
    }


def _truth(data_dir, subject, signals, fs):
    track = _annotations(data_dir, subject)
    if track is None:
        return None
    return [rasterize_annotations_clipped(track, fs, len(sig), sig.origin_time) for sig in signals]


def rasterize_annotations_clipped(track, fs, length, origin):
    """Rasterise only the intervals overlapping this block."""
    end = origin + length / fs
    clipped = tuple(
        (max(a, origin), min(b, end), label) for a, b, label in track.intervals if b > origin and a < end
    )
    return rasterize_annotations(AnnotationTrack(clipped), fs, length, origin)


def _collect(data_dir, work_dir, cfg, subjects):
    """Per-subject scores of every method plus truth masks (concatenated over blocks)."""
    rows = {}
    for s in subjects:
        signals = load_signals(work_dir, s, cfg.sample_rate)
        blocks = load_segmentation(work_dir, s)
        kept = {round(o, 9) for o, _ in blocks}
        signals = [sig for sig in signals if round(sig.origin_time, 9) in kept]
        truth = _truth(data_dir, s, signals, cfg.sample_rate)
        scores = {"arihmm": np.concatenate(_arihmm_scores(blocks, cfg))}
        per_method = {m: [] for m in BASELINES}
        for sig in signals:
            for m, det in _baseline_detections(sig, cfg).items():
                per_method[m].append(det.sample_scores)
        scores.update({m: np.concatenate(v) for m, v in per_method.items()})
        rows[s] = (scores, None if truth is None else np.concatenate(truth))
    return rows


def _energy_threshold(data_dir, work_dir, cfg, subjects, required: bool = True) -> float | None:
    """The configured gait energy threshold, or one fitted on the annotated subjects."""
    if cfg.energy_threshold is not None:
        return cfg.energy_threshold
    scores, truths = [], []
    for s in subjects:
        signals = load_signals(work_dir, s, cfg.sample_rate)
        blocks = load_segmentation(work_dir, s)
        truth = _truth(data_dir, s, [sig for sig in signals if len(sig) >= _min_block(cfg)], cfg.sample_rate)
        if truth is None:
            continue
        scores.append(np.concatenate(_arihmm_scores(blocks, cfg)))
        truths.append(np.concatenate(truth))
    if not scores:
        if not required:
            return None
        raise ConfigError("energy_threshold", "no annotations available to fit it; set it explicitly")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return optimize_threshold(scores, truths)


def stage_detect(data_dir, work_dir, cfg, jobs, subjects):
    _ensure_signals(data_dir, work_dir, cfg, jobs, subjects)
    fitted = {}
    configured = {"std": cfg.std_threshold, "stft": cfg.stft_threshold, "nasc": cfg.nasc_threshold, "cwt": cfg.cwt_threshold}
    per_subject = {s: [_baseline_detections(sig, cfg) for sig in load_signals(work_dir, s, cfg.sample_rate)] for s in subjects}
    for m in BASELINES:
        if configured[m] is not None:
            fitted[m] = configured[m]
            continue
        scores, truths = [], []
        for s in subjects:
            signals = load_signals(work_dir, s, cfg.sample_rate)
            truth = _truth(data_dir, s, signals, cfg.sample_rate)
            if truth is None:
                continue
            scores.append(np.concatenate([d[m].sample_scores for d in per_subject[s]]))
            truths.append(np.concatenate(truth))
        if not scores:
            raise ConfigError(f"{m}_threshold", "no annotations available to fit it; set it explicitly")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fitted[m] = optimize_threshold(scores, truths)
    for s in subjects:
        payload = {
            "subject": s,
            "thresholds": fitted,
            "blocks": [{m: d[m].with_threshold(fitted[m]).to_dict() for m in BASELINES} for d in per_subject[s]],
            "config": cfg.to_dict(),
            "seed": cfg.seed,
        }
        write_json(work_dir / f"{s}.detections.json", payload)


def stage_classify(data_dir, work_dir, cfg, jobs, subjects):
    _ensure_segmentation(data_dir, work_dir, cfg, jobs, subjects)
    energy = _energy_threshold(data_dir, work_dir, cfg, subjects)
    segments = []
    for s in subjects:
        sessions = _sessions(data_dir, s)
        for origin, res in load_segmentation(work_dir, s):
            flags, _ = label_states_gait(res, energy, (cfg.band_lo, cfg.band_hi))
            segments += gait_features(res, flags, s, sessions, origin, (cfg.band_lo, cfg.band_hi))
    write_segments_csv(work_dir / "gait_segments.csv", segments)
    results = {}
    usable = [g for g in segments if g.duration_s >= cfg.classify_min_segment_s]
    feature_sets = [(f,) for f in cfg.classify_features]
    if cfg.classify_multi:
        feature_sets.append(tuple(cfg.classify_features))
    for feats in feature_sets:
        key = "+".join(feats)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = classify_loso(usable, feats, cfg.l2_weight, cfg.seed, cfg.min_gait_seconds)
            results[key] = report.to_dict()
        except ValueError as exc:
            results[key] = {"error": str(exc)}
    write_json(
        work_dir / "classification.json",
        {"energy_threshold": energy, "results": results, "n_segments": len(segments), "config": cfg.to_dict(), "seed": cfg.seed},
    )


def stage_evaluate(data_dir, work_dir, cfg, jobs, subjects):
    _ensure_segmentation(data_dir, work_dir, cfg, jobs, subjects)
    rows = _collect(data_dir, work_dir, cfg, subjects)
    annotated = [s for s in subjects if rows[s][1] is not None]
    if len(annotated) < 2:
        raise ValueError("evaluation needs annotations for at least 2 subjects")
    methods = {}
    roc_rows = []
    for m in METHODS:
        cohort = [SubjectScores(s, rows[s][0][m], rows[s][1]) for s in annotated]
        report = loso_evaluate(cohort)
        per = report.per_subject.values()
        sens = summarize(r.sensitivity for r in per if r.sensitivity is not None)
        spec = summarize(r.specificity for r in per if r.specificity is not None)
        pooled_scores = np.concatenate([c.scores for c in cohort])
        pooled_truth = np.concatenate([c.truth for c in cohort])
        roc = roc_curve(pooled_scores, pooled_truth)
        for th, f, t in roc.to_rows():
            roc_rows.append((m, th, f, t))
        methods[m] = {
            "loso": report.to_dict(),
            "sensitivity_mean": sens[0],
            "sensitivity_std": sens[1],
            "specificity_mean": spec[0],
            "specificity_std": spec[1],
            "balanced_accuracy_mean": report.mean_balanced_accuracy,
            "balanced_accuracy_std": report.std_balanced_accuracy,
            "auc": roc.auc,
        }
    payload = {
        "level": "sample",
        "methods": methods,
        "subjects": annotated,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
    }
    write_json(work_dir / "metrics.json", payload)
    with open(work_dir / "roc.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "threshold", "fpr", "tpr"))
        for m, th, f, t in roc_rows:
            w.writerow((m, repr(th), repr(f), repr(t)))


def write_report(results: dict, path) -> None:
    """Human-readable table of per-method sensitivity, specificity and balanced accuracy."""
    lines = [
        "Gait detection, leave-one-subject-out, sample-level metrics: mean (std) across subjects",
        "",
        f"{'method':<8} {'sensitivity':>18} {'specificity':>18} {'balanced acc.':>18} {'AUC':>8}",
    ]
    for m in sorted(results["methods"]):
        r = results["methods"][m]
        lines.append(
            f"{m:<8} {_pct(r['sensitivity_mean'], r['sensitivity_std']):>18} "
            f"{_pct(r['specificity_mean'], r['specificity_std']):>18} "
            f"{_pct(r['balanced_accuracy_mean'], r['balanced_accuracy_std']):>18} {r['auc']:>8.3f}"
        )
    lines += ["", f"seed: {results['seed']}", f"subjects: {', '.join(results['subjects'])}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pct(mean, std):
    return f"{100 * mean:.1f}% ({100 * std:.1f}%)"


def stage_report(data_dir, work_dir, cfg, jobs, subjects):
    if not (work_dir / "metrics.json").exists():
        stage_evaluate(data_dir, work_dir, cfg, jobs, subjects)
    write_report(read_json(work_dir / "metrics.json"), work_dir / "report.txt")


def stage_synth(data_dir: Path, cfg: PipelineConfig) -> list[str]:
    spec = CohortSpec(
        n_subjects=cfg.synth_subjects,
        duration_s=cfg.synth_duration_s,
        walk_fraction=cfg.synth_walk_fraction,
        bout_s=cfg.synth_bout_s,
        fs=cfg.sample_rate,
        activity_fraction=cfg.synth_activity_fraction,
        bump_rate_hz=cfg.synth_bump_rate_hz,
        medication=cfg.synth_medication,
    )
    data_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for rec in gen_cohort(spec, seed=cfg.seed):
        sid = rec.recording.subject_id
        write_recording_csv(data_dir / f"{sid}.csv", rec.recording)
        write_intervals_csv(data_dir / f"{sid}.annotations.csv", rec.annotations.intervals)
        if rec.recording.sessions:
            write_intervals_csv(data_dir / f"{sid}.sessions.csv", rec.recording.sessions)
        names.append(sid)
    write_json(data_dir / "cohort.json", {"subjects": names, "config": cfg.to_dict(), "seed": cfg.seed})
    return names


STAGES = {
    "preprocess": stage_preprocess,
    "segment": stage_segment,
    "detect": stage_detect,
    "classify": stage_classify,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_pipeline(subcommand: str, cfg: PipelineConfig, data_dir, work_dir=None, jobs: int = 1) -> int:
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    data_dir = Path(data_dir)
    if subcommand == "synth":
        stage_synth(data_dir, cfg)
        return 0
    if work_dir is None:
        raise ValueError(f"{subcommand} needs a work directory")
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    STAGES[subcommand](data_dir, work_dir, cfg, jobs, list_subjects(data_dir))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitseg",
        description="Switching-AR gait segmentation, baseline detectors and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="pipeline stage to run")
    parser.add_argument("--data", required=True, type=Path, help="dataset directory (written by synth)")
    parser.add_argument("--work", type=Path, help="directory for artifacts")
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (value parsed as JSON); repeatable")
    parser.add_argument("--jobs", type=int, default=1, help="subjects processed in parallel")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"gaitseg: {exc}", file=sys.stderr)
        return 3
    if args.jobs < 1:
        print("gaitseg: --jobs must be at least 1", file=sys.stderr)
        return 2
    if args.subcommand != "synth" and args.work is None:
        parser.print_usage(sys.stderr)
        print(f"gaitseg: {args.subcommand} requires --work", file=sys.stderr)
        return 2
    try:
        return run_pipeline(args.subcommand, cfg, args.data, args.work, args.jobs)
    except ConfigError as exc:
        print(f"gaitseg: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"gaitseg: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

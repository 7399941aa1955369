"""File formats: recording/annotation/session CSVs, JSON artifacts and the SVG timeline."""
from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .evaluation import AnnotationTrack
from .signal_prep import RawRecording

RECORDING_HEADER = ("t", "ax", "ay", "az")


class CSVFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def _fmt(value: float) -> str:
    return repr(float(value))


def write_recording_csv(path, rec: RawRecording) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORDING_HEADER)
        for row in zip(rec.t, rec.ax, rec.ay, rec.az):
            w.writerow([_fmt(v) for v in row])


def load_recording_csv(path, subject_id: str | None = None, sessions=()) -> RawRecording:
    """Parse a ``t,ax,ay,az`` file.

    Rows repeating the previous timestamp are dropped with a warning;
    malformed rows and decreasing timestamps raise :class:`CSVFormatError`
    naming the 1-based line.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(path, 1, "empty file") from None
        if tuple(h.strip() for h in header) != RECORDING_HEADER:
            raise CSVFormatError(path, 1, f"expected header {','.join(RECORDING_HEADER)}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CSVFormatError(path, line_no, f"expected 4 fields, found {len(row)}")
            try:
                rows.append((line_no, float(row[0]), float(row[1]), float(row[2]), float(row[3])))
            except ValueError:
                raise CSVFormatError(path, line_no, "non-numeric field") from None
    if len(rows) < 2:
        raise CSVFormatError(path, len(rows) + 1, "a recording needs at least 2 samples")
    data = np.array([r[1:] for r in rows])
    lines = np.array([r[0] for r in rows])
    if not np.all(np.isfinite(data)):
        bad = int(lines[np.flatnonzero(~np.isfinite(data).all(axis=1))[0]])
        raise CSVFormatError(path, bad, "non-finite value")
    dt = np.diff(data[:, 0])
    back = np.flatnonzero(dt < 0)
    if back.size:
        raise CSVFormatError(path, int(lines[back[0] + 1]), "timestamp goes backwards")
    dup = np.flatnonzero(dt == 0) + 1
    if dup.size:
        warnings.warn(f"{path}: dropped {dup.size} rows with duplicate timestamps (first at line {lines[dup[0]]})")
        data = np.delete(data, dup, axis=0)
    sid = path.name.split(".")[0] if subject_id is None else subject_id
    return RawRecording(data[:, 0], data[:, 1], data[:, 2], data[:, 3], subject_id=sid, sessions=tuple(sessions))


def write_intervals_csv(path, intervals) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("start", "end", "label"))
        for start, end, label in intervals:
            w.writerow((_fmt(start), _fmt(end), label))


def read_intervals_csv(path) -> list[tuple[float, float, str]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("start", "end", "label"):
            raise CSVFormatError(path, 1, "expected header start,end,label")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CSVFormatError(path, line_no, f"expected 3 fields, found {len(row)}")
            try:
                out.append((float(row[0]), float(row[1]), row[2].strip()))
            except ValueError:
                raise CSVFormatError(path, line_no, "non-numeric interval bound") from None
    return out


def read_annotations_csv(path) -> AnnotationTrack:
    return AnnotationTrack(tuple(read_intervals_csv(path)))


def write_json(path, payload) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


_PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


def timeline_svg(blocks, fs: float, gait_states=None, width: int = 1000, row_height: int = 28, title: str = "") -> str:
    """Coloured state bands per block; gait states get a dark underline.

    ``blocks`` is a list of ``(origin_time_s, segments)`` with segments as
    half-open ``(start, end, state)`` sample ranges.
    """
    gait_states = gait_states or [set() for _ in blocks]
    spans = [(origin, origin + (segs[-1][1] if segs else 0) / fs) for origin, segs in blocks]
    t0 = min((a for a, _ in spans), default=0.0)
    t1 = max((b for _, b in spans), default=1.0)
    scale = (width - 20) / max(t1 - t0, 1e-9)
    height = 30 + row_height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="10" y="16" font-family="sans-serif" font-size="12">{title}</text>',
    ]
    for (origin, segs), gait in zip(blocks, gait_states):
        for start, end, state in segs:
            x = 10 + (origin + start / fs - t0) * scale
            w = max((end - start) / fs * scale, 0.1)
            colour = _PALETTE[(state - 1) % len(_PALETTE)]
            parts.append(
                f'<rect x="{x:.3f}" y="24" width="{w:.3f}" height="{row_height - 6}" fill="{colour}">'
                f"<title>state {state}: {origin + start / fs:.2f}-{origin + end / fs:.2f} s</title></rect>"
            )
            if state in gait:
                parts.append(f'<rect x="{x:.3f}" y="{24 + row_height - 5}" width="{w:.3f}" height="4" fill="#222"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

"""Onset-tolerance transcription scoring over reduced instrument labels.

Reference and estimate event sequences are folded through a reduction map,
matched per reduced class with a tolerance window, and reported as
per-class and micro-averaged ("SUM") precision/recall/F1, with optional
presentation columns (e.g. CY and RD pooled into one "CY+RD" column).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import DrumpipeError
from .midi import DrumEvent, EventSequence
from .vocab import NUM_CLASSES, ReductionMap, reduce as reduce_class

DEFAULT_TOLERANCE_S = 0.050


class AnnotationError(DrumpipeError, ValueError):
    pass


class ReportConfigError(DrumpipeError, ValueError):
    """Reports with mismatched tolerance/mapping cannot be pooled."""


@dataclass(frozen=True)
class ClassStats:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "ClassStats") -> "ClassStats":
        return ClassStats(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[str, ClassStats]
    sum: ClassStats
    columns: dict[str, ClassStats]
    tolerance_s: float
    mapping_id: str

    def to_dict(self) -> dict:
        return {
            "tolerance_s": self.tolerance_s,
            "mapping_id": self.mapping_id,
            "sum": self.sum.to_dict(),
            "per_class": {k: v.to_dict() for k, v in self.per_class.items()},
            "columns": {k: v.to_dict() for k, v in self.columns.items()},
        }


def _check_sorted(times: list[float], side: str) -> None:
    for i in range(1, len(times)):
        if times[i] < times[i - 1]:
            raise ValueError(f"{side} onset list is not sorted at index {i}")


def match_onsets(ref: list[float], est: list[float], tol: float) -> tuple[int, int, int]:
    """Maximum one-to-one matching of sorted onset lists within |ref-est| <= tol.

    Returns (tp, fp, fn). The sorted two-pointer greedy attains maximum
    cardinality for this interval structure.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    _check_sorted(ref, "reference")
    _check_sorted(est, "estimate")
    i = j = tp = 0
    while i < len(ref) and j < len(est):
        if abs(ref[i] - est[j]) <= tol:
            tp += 1
            i += 1
            j += 1
        elif est[j] < ref[i] - tol:
            j += 1
        else:
            i += 1
    return tp, len(est) - tp, len(ref) - tp


def _times_by_label(seq: EventSequence, rmap: ReductionMap) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for ev in seq.events:
        label = reduce_class(ev.instrument, rmap)
        if label is not None:
            out.setdefault(label, []).append(ev.time_s)
    return out


def score(ref: EventSequence, est: EventSequence, rmap: ReductionMap,
          tol: float = DEFAULT_TOLERANCE_S) -> EvalReport:
    """Per-reduced-class matching; SUM pools tp/fp/fn before the P/R/F1 formulas."""
    ref_by = _times_by_label(ref, rmap)
    est_by = _times_by_label(est, rmap)
    per_class: dict[str, ClassStats] = {}
    for label in rmap.labels:
        tp, fp, fn = match_onsets(ref_by.get(label, []), est_by.get(label, []), tol)
        per_class[label] = ClassStats(tp, fp, fn)

    total = ClassStats()
    for stats in per_class.values():
        total = total + stats

    columns: dict[str, ClassStats] = {col: ClassStats() for col in rmap.columns}
    for label, stats in per_class.items():
        col = rmap.column_of(label)
        if col is not None:
            columns[col] = columns[col] + stats

    return EvalReport(per_class=per_class, sum=total, columns=columns,
                      tolerance_s=tol, mapping_id=rmap.map_id)


def aggregate_reports(reports: list[EvalReport]) -> EvalReport:
    """Pool tp/fp/fn across tracks/splits, then recompute all metrics."""
    if not reports:
        raise ValueError("nothing to aggregate")
    first = reports[0]
    for r in reports[1:]:
        if r.tolerance_s != first.tolerance_s or r.mapping_id != first.mapping_id:
            raise ReportConfigError(
                "cannot pool reports with different tolerance or mapping "
                f"({r.tolerance_s}/{r.mapping_id} vs {first.tolerance_s}/{first.mapping_id})")
    per_class: dict[str, ClassStats] = {}
    columns: dict[str, ClassStats] = {}
    for r in reports:
        for label, stats in r.per_class.items():
            per_class[label] = per_class.get(label, ClassStats()) + stats
        for col, stats in r.columns.items():
            columns[col] = columns.get(col, ClassStats()) + stats
    total = ClassStats()
    for stats in per_class.values():
        total = total + stats
    return EvalReport(per_class=per_class, sum=total, columns=columns,
                      tolerance_s=first.tolerance_s, mapping_id=first.mapping_id)


def load_annotations(path: str | Path, label_map: dict[str, int] | None = None) -> EventSequence:
    """Read "onset<TAB>label[<TAB>velocity]" lines into an EventSequence.

    Labels must be 26-class integer ids unless `label_map` translates the
    annotation vocabulary.
    """
    events: list[DrumEvent] = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) < 2:
                raise AnnotationError(f"{path}:{line_no}: expected 'onset<TAB>label'")
            try:
                time_s = float(parts[0])
            except ValueError:
                raise AnnotationError(f"{path}:{line_no}: bad onset {parts[0]!r}") from None
            label = parts[1]
            if label_map is not None:
                if label not in label_map:
                    raise AnnotationError(f"{path}:{line_no}: label {label!r} not in label map")
                instrument = int(label_map[label])
            else:
                try:
                    instrument = int(label)
                except ValueError:
                    raise AnnotationError(
                        f"{path}:{line_no}: label {label!r} is not an instrument id; "
                        "provide a label map") from None
            if not 0 <= instrument < NUM_CLASSES:
                raise AnnotationError(f"{path}:{line_no}: instrument {instrument} out of range")
            velocity = int(parts[2]) if len(parts) > 2 else 100
            events.append(DrumEvent(time_s, instrument, velocity))
    duration = max((e.time_s for e in events), default=0.0) + 0.010
    return EventSequence.from_events(events, duration)


def write_report_json(report: EvalReport, path: str | Path, extra: dict | None = None) -> None:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_columns_csv(report: EvalReport, path: str | Path) -> None:
    """F1 row in presentation-column layout, SUM first."""
    headers = ["SUM"] + list(report.columns)
    values = [report.sum.f1] + [report.columns[c].f1 for c in report.columns]
    lines = [",".join(headers), ",".join(f"{v:.4f}" for v in values)]
    Path(path).write_text("\n".join(lines) + "\n")

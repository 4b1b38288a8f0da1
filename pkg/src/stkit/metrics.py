"""Tube, span, and box evaluation metrics.

* tIoU: intersection over union of two time intervals.
* box IoU: intersection area over union area of two boxes.
* sIoU: boxes of both tubes are sampled on the time-anchor ticks that fall
  inside the overlap of the two tube spans (step-function lookup from the
  nearest preceding keyframe) and the per-tick box IoUs are averaged.
  Sampling both tubes on the same tick grid keeps the metric symmetric and
  exactly reproducible.

Thresholded rates use strict ">" (a score exactly at the threshold does
not count). Records whose prediction is missing or unparseable score 0 and
are counted as failed, so failures can never inflate a metric. Scoring is
a deterministic reduction over records: the result does not depend on
record order.

JSONL record schema (all coordinates normalized fractions):

    {"id": ..., "task": "STVG", "span": [s, e], "box": [x0, y0, x1, y1],
     "tube": [[t, [x0, y0, x1, y1]], ...], "caption": "..."}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .codec import BBox, SpatioTemporalTube, TemporalSpan, dequantize
from .errors import DomainError, SchemaError

TASKS = ("STVG", "ELC", "SVG", "TVG", "REC")

_REQUIRED_FIELD = {
    "STVG": "tube",
    "ELC": "tube",
    "SVG": "tube",
    "TVG": "span",
    "REC": "box",
}

DEFAULT_TICKS = 100


@dataclass
class PredictionRecord:
    sample_id: str
    task: str | None = None
    tube: SpatioTemporalTube | None = None
    span: TemporalSpan | None = None
    box: BBox | None = None
    caption: str | None = None

    def validate_for(self, task: str) -> None:
        if task not in TASKS:
            raise DomainError(f"unknown task {task!r}; expected one of {TASKS}")
        want = _REQUIRED_FIELD[task]
        if getattr(self, want) is None:
            raise DomainError(f"task {task} requires field {want!r}")


@dataclass
class MetricReport:
    task: str
    metrics: dict[str, float]
    total: int
    scored: int
    failed: int
    diagnostics: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "metrics": self.metrics,
            "counts": {"total": self.total, "scored": self.scored, "failed": self.failed},
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, indent=2)


def temporal_iou(a: TemporalSpan, b: TemporalSpan) -> float:
    """|a n b| / |a u b|; two identical point spans count as 1."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    union = max(a.end, b.end) - min(a.start, b.start)
    if union <= 0.0:
        # zero-length union means all four endpoints coincide
        return 1.0 if inter >= 0.0 else 0.0
    return max(inter, 0.0) / union


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; any zero-area operand scores 0."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _box_at(tube: SpatioTemporalTube, t: float) -> BBox | None:
    """Step-function lookup: box of the last keyframe at or before t."""
    found = None
    for ts, box in tube.keyframes:
        if ts <= t:
            found = box
        else:
            break
    return found


def s_iou(
    pred: SpatioTemporalTube, gt: SpatioTemporalTube, num_ticks: int = DEFAULT_TICKS
) -> float:
    """Mean per-tick box IoU over the overlap of the two tube spans.

    Ticks are the ``num_ticks`` time anchors i/(num_ticks-1) inside the
    overlap (inclusive); ticks where either tube has no preceding keyframe
    are skipped. Disjoint spans, or an overlap containing no usable tick,
    score 0. An overlap narrower than one tick gap that misses every anchor
    therefore scores 0 even for identical tubes; tubes quantized by the
    codec always sit on anchors, so this affects only sub-resolution spans.
    """
    if num_ticks < 2:
        raise DomainError(f"num_ticks must be >= 2, got {num_ticks}")
    o_start = max(pred.span.start, gt.span.start)
    o_end = min(pred.span.end, gt.span.end)
    if o_start > o_end:
        return 0.0
    total = 0.0
    count = 0
    for i in range(num_ticks):
        t = dequantize(i, num_ticks)
        if t < o_start or t > o_end:
            continue
        bp = _box_at(pred, t)
        bg = _box_at(gt, t)
        if bp is None or bg is None:
            continue
        total += box_iou(bp, bg)
        count += 1
    if count == 0:
        return 0.0
    return total / count


# --- record I/O ------------------------------------------------------------


def record_from_json(obj: dict) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    if "id" not in obj:
        raise ValueError("record is missing 'id'")
    rec = PredictionRecord(sample_id=str(obj["id"]))
    task = obj.get("task")
    if task is not None:
        rec.task = str(task).upper()
    if obj.get("span") is not None:
        s = obj["span"]
        if not isinstance(s, (list, tuple)) or len(s) != 2:
            raise ValueError("'span' must be [start, end]")
        rec.span = TemporalSpan(float(s[0]), float(s[1]))
    if obj.get("box") is not None:
        b = obj["box"]
        if not isinstance(b, (list, tuple)) or len(b) != 4:
            raise ValueError("'box' must be [x0, y0, x1, y1]")
        rec.box = BBox(*(float(v) for v in b))
    if obj.get("tube") is not None:
        t = obj["tube"]
        if not isinstance(t, (list, tuple)) or not t:
            raise ValueError("'tube' must be a nonempty list of [t, [x0, y0, x1, y1]]")
        keyframes = []
        for entry in t:
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise ValueError("tube entries must be [t, [x0, y0, x1, y1]]")
            ts, b = entry
            if not isinstance(b, (list, tuple)) or len(b) != 4:
                raise ValueError("tube boxes must be [x0, y0, x1, y1]")
            keyframes.append((float(ts), BBox(*(float(v) for v in b))))
        span = rec.span
        rec.tube = SpatioTemporalTube.from_keyframes(keyframes, span=span)
        if rec.span is None:
            rec.span = rec.tube.span
    if obj.get("caption") is not None:
        rec.caption = str(obj["caption"])
    return rec


def load_records_jsonl(
    path: str | Path, task: str | None = None, strict: bool = True
) -> tuple[list[PredictionRecord], list[tuple[int, str]]]:
    """Read one record per line.

    ``strict`` (ground truth): every malformed line is an error and the
    caller should raise ``SchemaError``. Lenient mode (predictions): a
    malformed line becomes a diagnostic and the record is dropped, which
    later scores 0 against its ground truth.
    """
    records: list[PredictionRecord] = []
    problems: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = record_from_json(json.loads(line))
                if task is not None and strict:
                    rec.validate_for(task)
                records.append(rec)
            except (ValueError, DomainError) as exc:
                problems.append((line_no, str(exc)))
    return records, problems


def match_records(
    gts: list[PredictionRecord], preds: list[PredictionRecord]
) -> tuple[list[tuple[PredictionRecord, PredictionRecord | None]], list[str]]:
    """Pair every ground truth with the prediction of the same id.

    Missing predictions pair with None (scored 0 later); duplicate and
    unmatched prediction ids are reported as diagnostics.
    """
    diagnostics: list[str] = []
    by_id: dict[str, PredictionRecord] = {}
    for p in preds:
        if p.sample_id in by_id:
            diagnostics.append(f"duplicate prediction id {p.sample_id!r}; keeping first")
            continue
        by_id[p.sample_id] = p
    pairs = []
    gt_ids = set()
    for g in gts:
        gt_ids.add(g.sample_id)
        pred = by_id.get(g.sample_id)
        if pred is None:
            diagnostics.append(f"no prediction for id {g.sample_id!r}; scored 0")
        pairs.append((g, pred))
    for pid in by_id:
        if pid not in gt_ids:
            diagnostics.append(f"prediction id {pid!r} has no ground truth; ignored")
    return pairs, diagnostics


# --- aggregation -----------------------------------------------------------


def _rate(values: list[float], threshold: float) -> float:
    return sum(1 for v in values if v > threshold) / len(values)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate(
    pairs: list[tuple[PredictionRecord, PredictionRecord | None]],
    task: str,
    num_ticks: int = DEFAULT_TICKS,
) -> MetricReport:
    """Score matched (ground truth, prediction) pairs for one task.

    STVG/ELC report tIoU@0.5, m_tIoU, sIoU@0.3, sIoU@0.5, m_sIoU over tube
    spans and tubes; SVG reports the spatial set only; TVG reports R@0.3,
    R@0.5, R@0.7 and mIoU over spans; REC reports Acc@0.5 over boxes.
    """
    task = task.upper()
    if task not in TASKS:
        raise DomainError(f"unknown task {task!r}; expected one of {TASKS}")
    if not pairs:
        raise DomainError("no records to aggregate")

    want = _REQUIRED_FIELD[task]
    diagnostics: list[str] = []
    t_vals: list[float] = []
    s_vals: list[float] = []
    b_vals: list[float] = []
    failed = 0

    for gt, pred in pairs:
        gt.validate_for(task)
        payload = getattr(pred, want) if pred is not None else None
        usable = payload is not None
        if not usable:
            failed += 1
            if pred is not None:
                diagnostics.append(
                    f"record {gt.sample_id!r}: prediction lacks {want!r}; scored 0"
                )
        if task in ("STVG", "ELC", "SVG"):
            if usable:
                t_vals.append(temporal_iou(payload.span, gt.tube.span))
                s_vals.append(s_iou(payload, gt.tube, num_ticks))
            else:
                t_vals.append(0.0)
                s_vals.append(0.0)
        elif task == "TVG":
            t_vals.append(temporal_iou(payload, gt.span) if usable else 0.0)
        else:  # REC
            b_vals.append(box_iou(payload, gt.box) if usable else 0.0)

    if task in ("STVG", "ELC"):
        metrics = {
            "tIoU@0.5": _rate(t_vals, 0.5),
            "m_tIoU": _mean(t_vals),
            "sIoU@0.3": _rate(s_vals, 0.3),
            "sIoU@0.5": _rate(s_vals, 0.5),
            "m_sIoU": _mean(s_vals),
        }
    elif task == "SVG":
        metrics = {
            "sIoU@0.3": _rate(s_vals, 0.3),
            "sIoU@0.5": _rate(s_vals, 0.5),
            "m_sIoU": _mean(s_vals),
        }
    elif task == "TVG":
        metrics = {
            "R@0.3": _rate(t_vals, 0.3),
            "R@0.5": _rate(t_vals, 0.5),
            "R@0.7": _rate(t_vals, 0.7),
            "mIoU": _mean(t_vals),
        }
    else:
        metrics = {"Acc@0.5": _rate(b_vals, 0.5)}

    total = len(pairs)
    return MetricReport(
        task=task,
        metrics=metrics,
        total=total,
        scored=total - failed,
        failed=failed,
        diagnostics=diagnostics,
    )


def emit_caption_pairs(
    pairs: list[tuple[PredictionRecord, PredictionRecord | None]],
    out_path: str | Path,
) -> int:
    """Write {id, prediction, reference} JSONL rows for external caption
    scoring, preserving input order; missing captions become empty strings."""
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for gt, pred in pairs:
            row = {
                "id": gt.sample_id,
                "prediction": (pred.caption if pred and pred.caption else ""),
                "reference": gt.caption or "",
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def report_to_text(report: MetricReport) -> str:
    lines = [
        f"task: {report.task}   records: {report.total}   "
        f"scored: {report.scored}   failed: {report.failed}"
    ]
    width = max(len(k) for k in report.metrics)
    for name, value in report.metrics.items():
        lines.append(f"  {name.ljust(width)}  {value:.6f}")
    return "\n".join(lines)


def validate_or_raise(problems: list[tuple[int, str]], source: str) -> None:
    if problems:
        raise SchemaError(f"invalid records in {source}", problems)

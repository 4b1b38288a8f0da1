import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stkit.codec import BBox, SpatioTemporalTube, TemporalSpan, dequantize
from stkit.errors import DomainError, SchemaError
from stkit.metrics import (
    PredictionRecord,
    aggregate,
    box_iou,
    emit_caption_pairs,
    load_records_jsonl,
    match_records,
    record_from_json,
    report_to_text,
    s_iou,
    temporal_iou,
    validate_or_raise,
)

UNIT = BBox(0, 0, 1, 1)
LEFT_HALF = BBox(0, 0, 0.5, 1)

spans = st.tuples(
    st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1)
).map(lambda p: TemporalSpan(min(p), max(p)))


# --- temporal IoU -------------------------------------------------------------


def test_temporal_iou_basic():
    a = TemporalSpan(0.0, 10 / 15)
    b = TemporalSpan(5 / 15, 1.0)
    assert abs(temporal_iou(a, b) - 5 / 15) <= 1e-12


def test_temporal_iou_identical_and_disjoint():
    a = TemporalSpan(0.2, 0.4)
    assert temporal_iou(a, a) == 1.0
    assert temporal_iou(a, TemporalSpan(0.5, 0.9)) == 0.0


def test_temporal_iou_degenerate():
    point = TemporalSpan(0.3, 0.3)
    assert temporal_iou(point, point) == 1.0
    assert temporal_iou(point, TemporalSpan(0.3, 0.6)) == 0.0
    assert temporal_iou(point, TemporalSpan(0.7, 0.7)) == 0.0


@given(spans, spans)
def test_temporal_iou_symmetric_and_bounded(a, b):
    v = temporal_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == temporal_iou(b, a)


def test_temporal_iou_affine_invariance():
    a = TemporalSpan(0.1, 0.5)
    b = TemporalSpan(0.3, 0.9)
    base = temporal_iou(a, b)
    for scale, shift in ((0.5, 0.1), (0.25, 0.7)):
        a2 = TemporalSpan(a.start * scale + shift, a.end * scale + shift)
        b2 = TemporalSpan(b.start * scale + shift, b.end * scale + shift)
        assert abs(temporal_iou(a2, b2) - base) <= 1e-12


# --- box IoU -----------------------------------------------------------------


def test_box_iou_cases():
    assert box_iou(UNIT, UNIT) == 1.0
    assert box_iou(BBox(0, 0, 0.5, 0.5), BBox(0.5, 0.5, 1, 1)) == 0.0
    assert abs(box_iou(UNIT, LEFT_HALF) - 0.5) <= 1e-12


def test_box_iou_zero_area():
    line = BBox(0.2, 0.1, 0.2, 0.9)
    assert box_iou(line, line) == 0.0
    assert box_iou(line, UNIT) == 0.0


@given(st.lists(st.floats(min_value=0, max_value=1), min_size=8, max_size=8))
def test_box_iou_symmetric_and_bounded(vals):
    xs1, ys1, xs2, ys2 = sorted(vals[0:2]), sorted(vals[2:4]), sorted(vals[4:6]), sorted(vals[6:8])
    a = BBox(xs1[0], ys1[0], xs1[1], ys1[1])
    b = BBox(xs2[0], ys2[0], xs2[1], ys2[1])
    v = box_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == box_iou(b, a)


# --- tube sIoU ----------------------------------------------------------------


def _tube_on_ticks(ticks, box, m_t=100):
    return SpatioTemporalTube.from_keyframes([(dequantize(i, m_t), box) for i in ticks])


def test_s_iou_identical():
    tube = _tube_on_ticks((2, 5, 9), BBox(0.1, 0.1, 0.7, 0.8))
    assert s_iou(tube, tube) == 1.0


def test_s_iou_disjoint():
    a = _tube_on_ticks((2, 3), UNIT)
    b = _tube_on_ticks((50, 60), UNIT)
    assert s_iou(a, b) == 0.0


def test_s_iou_worked_example():
    # pred covers ticks 2..4 with the unit box, gt covers 3..5 with the left
    # half; the overlap contains ticks {3, 4}, each scoring IoU 0.5
    pred = _tube_on_ticks((2, 3, 4), UNIT)
    gt = _tube_on_ticks((3, 4, 5), LEFT_HALF)
    assert s_iou(pred, gt, 100) == 0.5


def _dense_tick_oracle(pred, gt, m_t):
    o_start = max(pred.span.start, gt.span.start)
    o_end = min(pred.span.end, gt.span.end)
    if o_start > o_end:
        return 0.0
    vals = []
    for i in range(m_t):
        t = dequantize(i, m_t)
        if not (o_start <= t <= o_end):
            continue
        bp = bg = None
        for ts, box in pred.keyframes:
            if ts <= t:
                bp = box
        for ts, box in gt.keyframes:
            if ts <= t:
                bg = box
        if bp is None or bg is None:
            continue
        vals.append(box_iou(bp, bg))
    return sum(vals) / len(vals) if vals else 0.0


def _random_tube(g, m_t=100):
    k = int(g.integers(1, 6))
    ticks = np.sort(g.choice(m_t, size=k, replace=False))
    kfs = []
    for t in ticks:
        xs = np.sort(g.uniform(0, 1, 2))
        ys = np.sort(g.uniform(0, 1, 2))
        kfs.append((dequantize(int(t), m_t), BBox(xs[0], ys[0], xs[1], ys[1])))
    return SpatioTemporalTube.from_keyframes(kfs)


def test_s_iou_matches_dense_oracle_and_symmetry():
    g = np.random.default_rng(3)
    for _ in range(100):
        pred, gt = _random_tube(g), _random_tube(g)
        v = s_iou(pred, gt, 100)
        assert v == _dense_tick_oracle(pred, gt, 100)
        assert v == s_iou(gt, pred, 100)
        assert 0.0 <= v <= 1.0


def test_s_iou_num_ticks_validation():
    tube = _tube_on_ticks((1, 2), UNIT)
    with pytest.raises(DomainError):
        s_iou(tube, tube, 1)


# --- aggregation ----------------------------------------------------------------


def _tube_record(sample_id, ticks, box):
    return PredictionRecord(sample_id=sample_id, tube=_tube_on_ticks(ticks, box))


def test_aggregate_perfect_single_record():
    gt = _tube_record("a", (2, 5), BBox(0.1, 0.1, 0.7, 0.8))
    report = aggregate([(gt, gt)], "STVG")
    assert report.metrics == {
        "tIoU@0.5": 1.0,
        "m_tIoU": 1.0,
        "sIoU@0.3": 1.0,
        "sIoU@0.5": 1.0,
        "m_sIoU": 1.0,
    }
    assert report.total == report.scored == 1 and report.failed == 0


def test_aggregate_rate_uses_strict_greater():
    # temporal IoUs of exactly {0.6, 0.4}: only 0.6 exceeds the 0.5 threshold
    gts = [
        PredictionRecord("a", span=TemporalSpan(0.0, 1.0)),
        PredictionRecord("b", span=TemporalSpan(0.0, 1.0)),
    ]
    preds = [
        PredictionRecord("a", span=TemporalSpan(0.0, 0.6)),
        PredictionRecord("b", span=TemporalSpan(0.0, 0.4)),
    ]
    report = aggregate(list(zip(gts, preds)), "TVG")
    assert abs(report.metrics["R@0.5"] - 0.5) <= 1e-12
    assert abs(report.metrics["mIoU"] - 0.5) <= 1e-12
    assert report.metrics["R@0.3"] >= report.metrics["R@0.5"] >= report.metrics["R@0.7"]


def test_aggregate_threshold_exactly_at_boundary_does_not_count():
    gts = [PredictionRecord("a", span=TemporalSpan(0.0, 1.0))]
    preds = [PredictionRecord("a", span=TemporalSpan(0.0, 0.5))]
    report = aggregate(list(zip(gts, preds)), "TVG")
    assert report.metrics["R@0.5"] == 0.0


def test_aggregate_missing_prediction_scores_zero():
    gt = _tube_record("a", (2, 5), UNIT)
    report = aggregate([(gt, None)], "STVG")
    assert report.metrics["m_sIoU"] == 0.0
    assert report.failed == 1 and report.scored == 0


def test_aggregate_prediction_missing_field_counts_failed():
    gt = _tube_record("a", (2, 5), UNIT)
    pred = PredictionRecord("a", span=TemporalSpan(0.1, 0.2))  # no tube
    report = aggregate([(gt, pred)], "STVG")
    assert report.failed == 1
    assert any("lacks" in d for d in report.diagnostics)


def test_aggregate_duplicated_records_same_rates():
    g = np.random.default_rng(8)
    pairs = []
    for i in range(10):
        gt = PredictionRecord(str(i), tube=_random_tube(g))
        pred = PredictionRecord(str(i), tube=_random_tube(g))
        pairs.append((gt, pred))
    single = aggregate(pairs, "SVG").metrics
    doubled = aggregate(pairs + pairs, "SVG").metrics
    for key in single:
        assert abs(single[key] - doubled[key]) <= 1e-12


def test_aggregate_rec_accuracy():
    gts = [
        PredictionRecord("a", box=UNIT),
        PredictionRecord("b", box=UNIT),
    ]
    preds = [
        PredictionRecord("a", box=UNIT),
        PredictionRecord("b", box=LEFT_HALF),
    ]
    report = aggregate(list(zip(gts, preds)), "REC")
    assert report.metrics == {"Acc@0.5": 0.5}


def test_aggregate_empty_raises():
    with pytest.raises(DomainError):
        aggregate([], "STVG")
    with pytest.raises(DomainError):
        aggregate([(PredictionRecord("a", box=UNIT), None)], "NOPE")


def test_report_serialization():
    gt = _tube_record("a", (2, 5), UNIT)
    report = aggregate([(gt, gt)], "STVG")
    payload = json.loads(report.to_json())
    assert payload["task"] == "STVG"
    assert payload["counts"]["total"] == 1
    text = report_to_text(report)
    assert "m_sIoU" in text and "records: 1" in text


# --- matching and record I/O ------------------------------------------------


def test_match_records_reports_gaps():
    gts = [PredictionRecord("a", box=UNIT), PredictionRecord("b", box=UNIT)]
    preds = [
        PredictionRecord("b", box=UNIT),
        PredictionRecord("b", box=UNIT),
        PredictionRecord("zz", box=UNIT),
    ]
    pairs, diags = match_records(gts, preds)
    assert pairs[0][1] is None and pairs[1][1] is not None
    joined = "\n".join(diags)
    assert "no prediction for id 'a'" in joined
    assert "duplicate prediction id 'b'" in joined
    assert "'zz' has no ground truth" in joined


def test_record_from_json_round_trip():
    rec = record_from_json(
        {
            "id": 7,
            "task": "stvg",
            "span": [0.1, 0.9],
            "tube": [[0.1, [0, 0, 1, 1]], [0.5, [0.1, 0.1, 0.6, 0.6]]],
            "caption": "hello",
        }
    )
    assert rec.sample_id == "7" and rec.task == "STVG"
    assert rec.span.start == 0.1 and len(rec.tube.keyframes) == 2
    assert rec.caption == "hello"


def test_record_from_json_errors():
    with pytest.raises(ValueError):
        record_from_json({"task": "STVG"})
    with pytest.raises(ValueError):
        record_from_json({"id": 1, "span": [0.1]})
    with pytest.raises((ValueError, DomainError)):
        record_from_json({"id": 1, "box": [0.5, 0.5, 0.1, 0.9]})


def test_load_records_strict_vs_lenient(tmp_path):
    path = tmp_path / "記録.jsonl"
    path.write_text(
        '{"id": "a", "box": [0, 0, 1, 1]}\n'
        "not json\n"
        '{"id": "c", "span": [0.9, 0.1]}\n',
        encoding="utf-8",
    )
    records, problems = load_records_jsonl(path, task="REC", strict=False)
    assert [r.sample_id for r in records] == ["a"]
    assert [n for n, _ in problems] == [2, 3]
    with pytest.raises(SchemaError) as err:
        validate_or_raise(problems, str(path))
    assert "line 2" in str(err.value)


def test_load_records_strict_task_fields(tmp_path):
    path = tmp_path / "gt.jsonl"
    path.write_text('{"id": "a", "span": [0.1, 0.4]}\n')
    _, problems = load_records_jsonl(path, task="REC", strict=True)
    assert problems and "requires field" in problems[0][1]


# --- caption pairs -------------------------------------------------------------


def test_emit_caption_pairs(tmp_path):
    gts = [
        PredictionRecord("a", caption="ref one"),
        PredictionRecord("b", caption=None),
    ]
    preds = [PredictionRecord("a", caption="hyp one"), None]
    out = tmp_path / "pairs.jsonl"
    n = emit_caption_pairs(list(zip(gts, preds)), out)
    assert n == 2
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0] == {"id": "a", "prediction": "hyp one", "reference": "ref one"}
    assert lines[1] == {"id": "b", "prediction": "", "reference": ""}

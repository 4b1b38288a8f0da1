"""Deterministic instruction-sample generation.

Six templated families are produced from annotated inputs:

* video: STVG (tube grounding), ELC (end localization + caption),
  SVG (tracklet given the span)
* image: DGC (dense grounded caption), REC (referring expression
  comprehension), RC (region caption)

Questions and answers are composed from fixed template lists joined by
single spaces. Placeholder payloads (``<event>``, ``<object>`` text and
box/span/tube token renderings) are inserted verbatim in one pass and are
never re-templated. Template choices come from a per-record SplitMix64
stream keyed by (seed, annotation id), so output is byte-stable across
runs, platforms, and any processing order.

Annotation JSONL schemas (boxes already normalized to [0, 1], timestamps
in seconds, normalized by ``duration`` on load):

    video: {"video_id": ..., "duration": secs, "event": "...",
            "tube": [[t_secs, [x0, y0, x1, y1]], ...]}
    image: {"image_id": ..., "objects": [{"phrase": "...", "box": [...]}, ...],
            "dense_caption": {"text": "...", "links": [["phrase", [...]], ...]}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .codec import (
    TIME,
    BBox,
    CoordToken,
    CoordVocab,
    SpatioTemporalTube,
    box_to_text,
    encode_span,
    encode_tube,
    normalize,
    quantize,
    render_token,
)
from .errors import DomainError
from .rng import SplitMix64, record_stream

VIDEO_TASKS = ("STVG", "ELC", "SVG")
IMAGE_TASKS = ("DGC", "REC", "RC")
ALL_TASKS = VIDEO_TASKS + IMAGE_TASKS

# Question templates: when does the event happen.
TEMPORAL_QUESTIONS = (
    "When does <event> occur in the video?",
    "At which time interval in the video can we see <event> occurring?",
    "During which time is <event> happening in the video?",
    "Tell me the timestamp when <event> happened in the video.",
    "At what time does <event> take place in the video?",
    "At what point in the video can we observe <event> taking place?",
)

# Question templates: where is the subject.
SPATIAL_QUESTIONS = (
    "Where is the corresponding subject/object located?",
    "Can you identify the position of the corresponding subject/object within this video?",
    "Please describe the location of the corresponding subject/object in this video.",
)

# Task instructions, one fixed string per video family.
INSTRUCTION_TUBE = (
    "Please firstly give the timestamps, and then give the spatial bounding box "
    "corresponding to each timestamp in the time period."
)
INSTRUCTION_END_EVENT_TUBE = (
    "Please firstly give the end timestamp, then give the event associated with the "
    "object/subject, finally give the spatial bounding box corresponding to each "
    "timestamp in the time period."
)
INSTRUCTION_BOXES = (
    "Please give the spatial bounding box corresponding to each timestamp in the time period."
)

# Span phrasings; each is completed by the brace-form span "{<tA>,<tB>}".
SPAN_TEMPLATES = (
    "During the span of",
    "In the time range",
    "During the period",
    "Within the time frame of",
    "In the time period",
    "During",
    "Between",
    "At",
)

# Image families.
DENSE_CAPTION_QUESTIONS = (
    "Could you please give me a detailed description of the image? Please respond "
    "with interleaved bounding boxes for the corresponding parts of the answer.",
    "Can you provide a thorough description of this image? Please output with "
    "interleaved bounding boxes for the corresponding phrases.",
    "Please describe in detail the contents of the image. Please respond with "
    "interleaved bounding boxes for the corresponding parts of the answer.",
    "Could you give a comprehensive explanation of what can be found within this "
    "picture? Please output with interleaved bounding boxes for the corresponding phrases.",
    "Could you give me an elaborate explanation of this picture? Please respond "
    "with interleaved bounding boxes for the corresponding phrases.",
    "Could you provide me with a detailed analysis of this photo? Please output "
    "with interleaved bounding boxes for the corresponding parts of the answer.",
)

REFERRING_QUESTIONS = (
    "In this image, where is <object> located?",
    "Can you identify the position of <object> within this image?",
    "Could you indicate the region where <object> is located in this image?",
    "Please describe the location of <object> in this image.",
    "Where can I find <object> in this image?",
    "What part of this image contains <object>?",
    "Where does <object> appear in this image?",
    "Where is <object> situated within this image?",
)

REGION_CAPTION_QUESTIONS = (
    "What happened about the subject/object within the specified region <box>?",
    "Can you identify the event about the subject/object within the region <box>?",
    "Describe the event about subject/object located within the region <box>.",
    "Can you describe the object within the region <box>?",
    "What can you deduce about the object in the region <box>?",
    "Identify the specific object within the region <box>.",
    "Describe the object located within the region <box>.",
)


class SkipRecord(Exception):
    """An annotation cannot produce a sample; carries the reason."""


@dataclass(frozen=True)
class VidAnnotation:
    video_id: str
    duration: float
    event: str
    tube: SpatioTemporalTube

    @classmethod
    def from_json(cls, obj: dict) -> "VidAnnotation":
        try:
            vid = str(obj["video_id"])
            duration = float(obj["duration"])
            event = str(obj["event"])
            raw_tube = obj["tube"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SkipRecord(f"not a video annotation: {exc}") from exc
        if duration <= 0:
            raise SkipRecord(f"nonpositive duration {duration}")
        if not isinstance(raw_tube, (list, tuple)) or not raw_tube:
            raise SkipRecord("tube must be a nonempty list")
        try:
            keyframes = [
                (normalize(float(ts), duration), BBox(*(float(v) for v in box)))
                for ts, box in raw_tube
            ]
            tube = SpatioTemporalTube.from_keyframes(keyframes)
        except (DomainError, TypeError, ValueError) as exc:
            raise SkipRecord(f"bad tube: {exc}") from exc
        return cls(vid, duration, event, tube)


@dataclass(frozen=True)
class ImgAnnotation:
    image_id: str
    objects: tuple[tuple[str, BBox], ...] = ()
    caption_text: str | None = None
    caption_links: tuple[tuple[str, BBox], ...] = ()

    @classmethod
    def from_json(cls, obj: dict) -> "ImgAnnotation":
        try:
            iid = str(obj["image_id"])
        except (KeyError, TypeError) as exc:
            raise SkipRecord(f"not an image annotation: {exc}") from exc
        objects = []
        for entry in obj.get("objects") or []:
            try:
                objects.append(
                    (str(entry["phrase"]), BBox(*(float(v) for v in entry["box"])))
                )
            except (KeyError, TypeError, ValueError, DomainError) as exc:
                raise SkipRecord(f"bad object entry: {exc}") from exc
        text = None
        links: list[tuple[str, BBox]] = []
        dense = obj.get("dense_caption")
        if dense is not None:
            try:
                text = str(dense["text"])
                for phrase, box in dense.get("links") or []:
                    links.append((str(phrase), BBox(*(float(v) for v in box))))
            except (KeyError, TypeError, ValueError, DomainError) as exc:
                raise SkipRecord(f"bad dense caption: {exc}") from exc
        return cls(iid, tuple(objects), text, tuple(links))


@dataclass(frozen=True)
class InstructionSample:
    task: str
    sample_id: str
    question: str
    answer: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "id": self.sample_id,
                "question": self.question,
                "answer": self.answer,
            },
            ensure_ascii=False,
        )


def _time_token(value: float, vocab: CoordVocab) -> str:
    return render_token(CoordToken(TIME, quantize(value, vocab.m_t)))


def _span_phrase(rng: SplitMix64, tube: SpatioTemporalTube, vocab: CoordVocab) -> str:
    prefix = SPAN_TEMPLATES[rng.randbelow(len(SPAN_TEMPLATES))]
    return f"{prefix} {encode_span(tube.span, vocab)}"


def forge_stvg(ann: VidAnnotation, vocab: CoordVocab, rng: SplitMix64) -> InstructionSample:
    """Tube grounding sample.

    Draw order: temporal question (6), spatial question (3), span template (8).
    """
    q_t = TEMPORAL_QUESTIONS[rng.randbelow(len(TEMPORAL_QUESTIONS))].replace(
        "<event>", ann.event
    )
    q_s = SPATIAL_QUESTIONS[rng.randbelow(len(SPATIAL_QUESTIONS))]
    question = " ".join([q_t, q_s, INSTRUCTION_TUBE])
    answer = " ".join([_span_phrase(rng, ann.tube, vocab), encode_tube(ann.tube, vocab)])
    return InstructionSample("STVG", ann.video_id, question, answer)


def forge_elc(ann: VidAnnotation, vocab: CoordVocab, rng: SplitMix64) -> InstructionSample:
    """End localization + caption sample: the question gives the start time
    and the first keyframe's box; the answer gives the end time, the event
    text, and the tube.

    Draw order: region-caption question (7), spatial question (3).
    """
    first_box = ann.tube.keyframes[0][1]
    q_c = REGION_CAPTION_QUESTIONS[rng.randbelow(len(REGION_CAPTION_QUESTIONS))].replace(
        "<box>", box_to_text(first_box, vocab)
    )
    q_s = SPATIAL_QUESTIONS[rng.randbelow(len(SPATIAL_QUESTIONS))]
    start = f"Start at {_time_token(ann.tube.span.start, vocab)}"
    question = " ".join([start, q_c, q_s, INSTRUCTION_END_EVENT_TUBE])
    end = f"End at {_time_token(ann.tube.span.end, vocab)}"
    answer = " ".join([end, ann.event, encode_tube(ann.tube, vocab)])
    return InstructionSample("ELC", ann.video_id, question, answer)


def forge_svg(ann: VidAnnotation, vocab: CoordVocab, rng: SplitMix64) -> InstructionSample:
    """Tracklet sample: the question gives the span and the event; the
    answer is the tube serialization only.

    Draw order: span template (8), spatial question (3).
    """
    span = _span_phrase(rng, ann.tube, vocab)
    q_s = SPATIAL_QUESTIONS[rng.randbelow(len(SPATIAL_QUESTIONS))]
    question = " ".join([span, ann.event, q_s, INSTRUCTION_BOXES])
    return InstructionSample("SVG", ann.video_id, question, encode_tube(ann.tube, vocab))


def _interleave_caption(
    text: str, links: tuple[tuple[str, BBox], ...], vocab: CoordVocab
) -> str:
    """Insert box tokens after each linked phrase, scanning left to right."""
    out = []
    cursor = 0
    for phrase, box in links:
        idx = text.find(phrase, cursor)
        if idx < 0:
            raise SkipRecord(f"linked phrase {phrase!r} not found in caption")
        end = idx + len(phrase)
        out.append(text[cursor:end])
        out.append(" " + box_to_text(box, vocab))
        cursor = end
    out.append(text[cursor:])
    return "".join(out)


def forge_image(
    ann: ImgAnnotation, task: str, vocab: CoordVocab, rng: SplitMix64
) -> InstructionSample:
    """Image sample for DGC, REC, or RC.

    Draw order: question template, then (REC/RC) object index.
    """
    task = task.upper()
    if task == "DGC":
        if ann.caption_text is None or not ann.caption_links:
            raise SkipRecord("DGC requires a dense caption with phrase links")
        question = DENSE_CAPTION_QUESTIONS[rng.randbelow(len(DENSE_CAPTION_QUESTIONS))]
        answer = _interleave_caption(ann.caption_text, ann.caption_links, vocab)
        return InstructionSample("DGC", ann.image_id, question, answer)
    if not ann.objects:
        raise SkipRecord(f"{task} requires at least one (phrase, box) object")
    if task == "REC":
        template = REFERRING_QUESTIONS[rng.randbelow(len(REFERRING_QUESTIONS))]
        phrase, box = ann.objects[rng.randbelow(len(ann.objects))]
        question = template.replace("<object>", phrase)
        return InstructionSample("REC", ann.image_id, question, box_to_text(box, vocab))
    if task == "RC":
        template = REGION_CAPTION_QUESTIONS[rng.randbelow(len(REGION_CAPTION_QUESTIONS))]
        phrase, box = ann.objects[rng.randbelow(len(ann.objects))]
        question = template.replace("<box>", box_to_text(box, vocab))
        return InstructionSample("RC", ann.image_id, question, phrase)
    raise DomainError(f"unknown image task {task!r}; expected one of {IMAGE_TASKS}")


def forge_annotation(
    obj: dict, task: str, vocab: CoordVocab, seed: int
) -> InstructionSample:
    """Build one sample from a parsed annotation object.

    The per-record stream is keyed by (seed, annotation id), so results do
    not depend on record order or parallel scheduling.
    """
    task = task.upper()
    if task not in ALL_TASKS:
        raise DomainError(f"unknown task {task!r}; expected one of {ALL_TASKS}")
    if task in VIDEO_TASKS:
        ann = VidAnnotation.from_json(obj)
        rng = record_stream(seed, ann.video_id)
        if task == "STVG":
            return forge_stvg(ann, vocab, rng)
        if task == "ELC":
            return forge_elc(ann, vocab, rng)
        return forge_svg(ann, vocab, rng)
    ann_img = ImgAnnotation.from_json(obj)
    rng = record_stream(seed, ann_img.image_id)
    return forge_image(ann_img, task, vocab, rng)


def forge_file(
    in_path: str | Path,
    out_path: str | Path,
    task: str,
    vocab: CoordVocab,
    seed: int,
) -> tuple[int, list[tuple[int, str]]]:
    """Forge a JSONL annotation file into a JSONL sample file.

    Returns (emitted count, skipped [(line_no, reason), ...]). Output order
    follows input order.
    """
    emitted = 0
    skipped: list[tuple[int, str]] = []
    with open(in_path, encoding="utf-8") as src, open(
        out_path, "w", encoding="utf-8"
    ) as dst:
        for line_no, line in enumerate(src, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                skipped.append((line_no, f"invalid JSON: {exc}"))
                continue
            try:
                sample = forge_annotation(obj, task, vocab, seed)
            except SkipRecord as exc:
                skipped.append((line_no, str(exc)))
                continue
            dst.write(sample.to_json_line() + "\n")
            emitted += 1
    return emitted, skipped

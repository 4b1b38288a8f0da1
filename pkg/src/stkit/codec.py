"""Coordinate quantization and the special-token grammar.

Coordinates are dimensionless fractions in [0, 1] (time divided by video
duration, x by frame width, y by frame height). Each axis carries ``m``
evenly spaced anchors at ``i / (m - 1)``; a coordinate maps to the nearest
anchor, ties going to the larger index. Timestamps always serialize through
the quantized anchor token; there is no sampled-frame-index form.

Text grammar (regular):

    token   <(t|w|h)(0|[1-9][0-9]*)>
    box     <wI><hJ><wK><hL>              order: x_min, y_min, x_max, y_max
    span    "{" timeToken "," timeToken "}"
    tube    timeToken ": " box ("," " "? timeToken ": " box)*
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import DomainError, ParseError

TIME = "t"
WIDTH = "w"
HEIGHT = "h"
AXES = (TIME, WIDTH, HEIGHT)

TOKEN_RE = re.compile(r"<([twh])(0|[1-9][0-9]*)>")


@dataclass(frozen=True)
class CoordVocab:
    """Anchor counts per axis plus the size of the preceding word vocabulary."""

    m_w: int = 100
    m_h: int = 100
    m_t: int = 100
    base_vocab_size: int = 0

    def __post_init__(self):
        for name in ("m_w", "m_h", "m_t"):
            if getattr(self, name) < 2:
                raise DomainError(f"{name} must be >= 2, got {getattr(self, name)}")
        if self.base_vocab_size < 0:
            raise DomainError("base_vocab_size must be >= 0")

    def anchors(self, axis: str) -> int:
        if axis == WIDTH:
            return self.m_w
        if axis == HEIGHT:
            return self.m_h
        if axis == TIME:
            return self.m_t
        raise DomainError(f"unknown axis {axis!r}")

    @property
    def coord_token_count(self) -> int:
        return self.m_w + self.m_h + self.m_t

    @property
    def extended_size(self) -> int:
        """Row count of the extended output layer."""
        return self.base_vocab_size + self.coord_token_count


@dataclass(frozen=True)
class CoordToken:
    axis: str
    index: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise DomainError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.index < 0:
            raise DomainError(f"token index must be >= 0, got {self.index}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized coordinates; min corner <= max corner."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"{name}={v} outside [0, 1]")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DomainError(
                f"box corners out of order: ({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class TemporalSpan:
    start: float
    end: float

    def __post_init__(self):
        for name in ("start", "end"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"{name}={v} outside [0, 1]")
        if self.start > self.end:
            raise DomainError(f"span out of order: [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SpatioTemporalTube:
    """Temporal span plus strictly increasing (timestamp, box) keyframes."""

    span: TemporalSpan
    keyframes: tuple[tuple[float, BBox], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.keyframes:
            raise DomainError("tube requires at least one keyframe")
        prev = None
        for ts, _box in self.keyframes:
            if not (self.span.start <= ts <= self.span.end):
                raise DomainError(f"keyframe timestamp {ts} outside span")
            if prev is not None and ts <= prev:
                raise DomainError(f"keyframe timestamps not strictly increasing at {ts}")
            prev = ts

    @classmethod
    def from_keyframes(
        cls, keyframes, span: TemporalSpan | None = None
    ) -> "SpatioTemporalTube":
        kfs = tuple((float(ts), box) for ts, box in keyframes)
        if not kfs:
            raise DomainError("tube requires at least one keyframe")
        if span is None:
            span = TemporalSpan(kfs[0][0], kfs[-1][0])
        return cls(span, kfs)

    @property
    def timestamps(self) -> list[float]:
        return [ts for ts, _ in self.keyframes]


def normalize(value: float, total: float) -> float:
    """Value/total clamped to [0, 1]; the clamp happens before quantization."""
    if total <= 0:
        raise DomainError(f"total must be positive, got {total}")
    return min(max(value / total, 0.0), 1.0)


def quantize(x: float, m: int) -> int:
    """Index of the nearest of ``m`` anchors at i/(m-1); ties go to the
    larger index (half-up rounding, which keeps quantization monotone)."""
    if m < 2:
        raise DomainError(f"anchor count must be >= 2, got {m}")
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"coordinate {x} outside [0, 1]")
    i = int(math.floor(x * (m - 1) + 0.5))
    return min(i, m - 1)


def dequantize(i: int, m: int) -> float:
    """Anchor position i/(m-1)."""
    if m < 2:
        raise DomainError(f"anchor count must be >= 2, got {m}")
    if not 0 <= i < m:
        raise DomainError(f"anchor index {i} outside [0, {m})")
    return i / (m - 1)


def render_token(tok: CoordToken) -> str:
    """"<t42>", "<w0>", ...; zero-based decimal index, no padding."""
    return f"<{tok.axis}{tok.index}>"


def render_tokens(tokens) -> str:
    return "".join(render_token(t) for t in tokens)


def parse_tokens(
    text: str, vocab: CoordVocab
) -> tuple[list[CoordToken | str], list[str]]:
    """Greedy left-to-right token scan.

    Token-shaped substrings with an in-range index become ``CoordToken``;
    everything else (including out-of-range token shapes) passes through as
    text. Out-of-range shapes are additionally reported as diagnostics, so
    malformed model output degrades instead of failing hard. Adjacent text
    is merged; rendering the parts back yields the input string unchanged.
    """
    parts: list[CoordToken | str] = []
    diagnostics: list[str] = []

    def push_text(segment: str) -> None:
        if not segment:
            return
        if parts and isinstance(parts[-1], str):
            parts[-1] += segment
        else:
            parts.append(segment)

    pos = 0
    for m in TOKEN_RE.finditer(text):
        push_text(text[pos : m.start()])
        axis, idx = m.group(1), int(m.group(2))
        if idx < vocab.anchors(axis):
            parts.append(CoordToken(axis, idx))
        else:
            diagnostics.append(
                f"token {m.group(0)} at position {m.start()} has out-of-range index"
            )
            push_text(m.group(0))
        pos = m.end()
    push_text(text[pos:])
    return parts, diagnostics


def extended_vocab_index(tok: CoordToken, vocab: CoordVocab) -> int:
    """Row of the token in the extended vocabulary.

    Layout: widths at [V, V+m_w), heights at [V+m_w, V+m_w+m_h), times at
    [V+m_w+m_h, V+m_w+m_h+m_t).
    """
    if tok.index >= vocab.anchors(tok.axis):
        raise DomainError(f"token index {tok.index} out of range for axis {tok.axis}")
    base = vocab.base_vocab_size
    if tok.axis == WIDTH:
        return base + tok.index
    if tok.axis == HEIGHT:
        return base + vocab.m_w + tok.index
    return base + vocab.m_w + vocab.m_h + tok.index


# --- boxes ---------------------------------------------------------------

_BOX_AXES = (WIDTH, HEIGHT, WIDTH, HEIGHT)


def encode_box(box: BBox, vocab: CoordVocab) -> list[CoordToken]:
    """Four tokens in fixed order x_min, y_min, x_max, y_max."""
    return [
        CoordToken(WIDTH, quantize(box.x_min, vocab.m_w)),
        CoordToken(HEIGHT, quantize(box.y_min, vocab.m_h)),
        CoordToken(WIDTH, quantize(box.x_max, vocab.m_w)),
        CoordToken(HEIGHT, quantize(box.y_max, vocab.m_h)),
    ]


def decode_box(tokens, vocab: CoordVocab) -> BBox:
    tokens = list(tokens)
    if len(tokens) != 4:
        raise ParseError(f"box needs exactly 4 tokens, got {len(tokens)}")
    axes = tuple(t.axis for t in tokens)
    if axes != _BOX_AXES:
        raise ParseError(f"box token axes must be (w,h,w,h), got {axes}")
    for t in tokens:
        if t.index >= vocab.anchors(t.axis):
            raise ParseError(f"box token {render_token(t)} index out of range")
    x0 = dequantize(tokens[0].index, vocab.m_w)
    y0 = dequantize(tokens[1].index, vocab.m_h)
    x1 = dequantize(tokens[2].index, vocab.m_w)
    y1 = dequantize(tokens[3].index, vocab.m_h)
    return BBox(x0, y0, x1, y1)


def box_to_text(box: BBox, vocab: CoordVocab) -> str:
    return render_tokens(encode_box(box, vocab))


_BOX_TEXT_RE = re.compile(r"<w(\d+)><h(\d+)><w(\d+)><h(\d+)>")


def box_from_text(text: str, vocab: CoordVocab) -> BBox:
    m = _BOX_TEXT_RE.fullmatch(text)
    if not m:
        raise ParseError(f"not a box token quadruple: {text!r}")
    tokens = [
        CoordToken(axis, int(idx)) for axis, idx in zip(_BOX_AXES, m.groups())
    ]
    return decode_box(tokens, vocab)


# --- spans ---------------------------------------------------------------


def encode_span(span: TemporalSpan, vocab: CoordVocab) -> str:
    s = CoordToken(TIME, quantize(span.start, vocab.m_t))
    e = CoordToken(TIME, quantize(span.end, vocab.m_t))
    return "{" + render_token(s) + "," + render_token(e) + "}"


_SPAN_TEXT_RE = re.compile(r"\{<t(\d+)>,<t(\d+)>\}")


def decode_span(text: str, vocab: CoordVocab) -> TemporalSpan:
    m = _SPAN_TEXT_RE.fullmatch(text)
    if not m:
        raise ParseError(f"not a span: {text!r}")
    a, b = int(m.group(1)), int(m.group(2))
    for idx in (a, b):
        if idx >= vocab.m_t:
            raise ParseError(f"span time index {idx} out of range")
    if a > b:
        raise ParseError(f"span endpoints out of order: {text!r}")
    return TemporalSpan(dequantize(a, vocab.m_t), dequantize(b, vocab.m_t))


# --- tubes ---------------------------------------------------------------

_PAIR_RE = re.compile(r"<t(\d+)>: <w(\d+)><h(\d+)><w(\d+)><h(\d+)>")


def encode_tube(tube: SpatioTemporalTube, vocab: CoordVocab) -> str:
    """One ``timeToken ": " box`` entry per keyframe, joined by ", "."""
    entries = []
    for ts, box in tube.keyframes:
        t = CoordToken(TIME, quantize(ts, vocab.m_t))
        entries.append(f"{render_token(t)}: {box_to_text(box, vocab)}")
    return ", ".join(entries)


def decode_tube(text: str, vocab: CoordVocab) -> SpatioTemporalTube:
    """Inverse of ``encode_tube``; the span is [first ts, last ts].

    Raises ``ParseError`` with the failing position on malformed pairs,
    out-of-range indices, or non-increasing timestamps.
    """
    if not text:
        raise ParseError("empty tube text", position=0)
    keyframes: list[tuple[float, BBox]] = []
    prev_idx: int | None = None
    pos = 0
    while True:
        m = _PAIR_RE.match(text, pos)
        if not m:
            raise ParseError("malformed keyframe pair", position=pos)
        t_idx = int(m.group(1))
        if t_idx >= vocab.m_t:
            raise ParseError(f"time index {t_idx} out of range", position=pos)
        box_idx = [int(g) for g in m.groups()[1:]]
        for axis, idx in zip(_BOX_AXES, box_idx):
            if idx >= vocab.anchors(axis):
                raise ParseError(f"box index {idx} out of range", position=pos)
        if prev_idx is not None and t_idx <= prev_idx:
            raise ParseError(
                f"timestamps not strictly increasing ({prev_idx} then {t_idx})",
                position=pos,
            )
        prev_idx = t_idx
        box = BBox(
            dequantize(box_idx[0], vocab.m_w),
            dequantize(box_idx[1], vocab.m_h),
            dequantize(box_idx[2], vocab.m_w),
            dequantize(box_idx[3], vocab.m_h),
        )
        keyframes.append((dequantize(t_idx, vocab.m_t), box))
        pos = m.end()
        if pos == len(text):
            break
        if text[pos] != ",":
            raise ParseError("expected ',' between keyframes", position=pos)
        pos += 1
        if pos < len(text) and text[pos] == " ":
            pos += 1
    return SpatioTemporalTube.from_keyframes(keyframes)

"""Render a corpus record into model input under each prompt setting.

Two target shapes: a single-line instruction string for chat-style models,
and a marker-segmented sequence for encoder-decoder training formats. Both
are byte-exact template fills over the record's raw field text; nothing is
escaped, quoted, or re-wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from .corpus import QuadRecord


class PromptSetting(str, Enum):
    WITH_LONG_PROMPT = "with_long_prompt"
    WITH_SHORT_PROMPT = "with_short_prompt"
    WITHOUT_PROMPT = "without_prompt"


class Side(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class Marker(str, Enum):
    CLS = "[CLS]"
    SEP = "[SEP]"


@dataclass(frozen=True)
class Instruction:
    text: str


@dataclass(frozen=True)
class Segment:
    marker: Marker
    payload: str = ""


@dataclass(frozen=True)
class Segmented:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments or self.segments[0].marker is not Marker.CLS:
            raise ValueError("segmented input must start with [CLS]")
        if self.segments[-1].marker is not Marker.SEP:
            raise ValueError("segmented input must end with [SEP]")


RenderedInput = Union[Instruction, Segmented]


def render_instruction(record: QuadRecord, setting: PromptSetting) -> Instruction:
    """Instruction-string rendering; the templates are fixed verbatim,
    including the capital-Q 'generate a Question' tail."""
    if setting is PromptSetting.WITH_LONG_PROMPT:
        text = (
            f"Given the context {record.context} and the long prompt "
            f"{record.long_prompt}, generate a Question"
        )
    elif setting is PromptSetting.WITH_SHORT_PROMPT:
        text = (
            f"Given the context {record.context} and the short prompt "
            f"{record.short_prompt}, generate a Question"
        )
    else:
        text = f"Given the context {record.context}, generate a Question"
    return Instruction(text)


def render_segmented(
    record: QuadRecord, setting: PromptSetting, side: Side
) -> Segmented:
    """Marker-segmented rendering. Source carries context plus the cue the
    setting selects; target is always the question alone."""
    if side is Side.TARGET:
        return Segmented(
            (Segment(Marker.CLS, record.question), Segment(Marker.SEP))
        )
    if setting is PromptSetting.WITH_LONG_PROMPT:
        cue = record.long_prompt
    elif setting is PromptSetting.WITH_SHORT_PROMPT:
        cue = record.short_prompt
    else:
        return Segmented((Segment(Marker.CLS, record.context), Segment(Marker.SEP)))
    return Segmented(
        (
            Segment(Marker.CLS, record.context),
            Segment(Marker.SEP, cue),
            Segment(Marker.SEP),
        )
    )


def flatten(rendered: RenderedInput) -> str:
    """Literal string form: markers and payloads joined by single spaces,
    no trailing whitespace."""
    if isinstance(rendered, Instruction):
        return rendered.text
    parts: list[str] = []
    for seg in rendered.segments:
        parts.append(seg.marker.value)
        if seg.payload:
            parts.append(seg.payload)
    return " ".join(parts)


def parse_setting(name: str) -> PromptSetting:
    """Accept both the canonical enum values and the short CLI aliases."""
    aliases = {
        "long": PromptSetting.WITH_LONG_PROMPT,
        "short": PromptSetting.WITH_SHORT_PROMPT,
        "without": PromptSetting.WITHOUT_PROMPT,
        "none": PromptSetting.WITHOUT_PROMPT,
    }
    if name in aliases:
        return aliases[name]
    try:
        return PromptSetting(name)
    except ValueError:
        raise ValueError(f"unknown prompt setting {name!r}") from None

from __future__ import annotations

import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgbench.corpus import QuadRecord
from qgbench.prompts import (
    Instruction,
    Marker,
    PromptSetting,
    Segment,
    Segmented,
    Side,
    flatten,
    parse_setting,
    render_instruction,
    render_segmented,
)

from conftest import PPP_CONTEXT, five_record_fixture

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")

SETTINGS = (
    PromptSetting.WITH_LONG_PROMPT,
    PromptSetting.WITH_SHORT_PROMPT,
    PromptSetting.WITHOUT_PROMPT,
)


class TestInstruction:
    def test_with_long_prompt(self, ppp_record):
        got = render_instruction(ppp_record, PromptSetting.WITH_LONG_PROMPT)
        assert got.text == (
            f"Given the context {PPP_CONTEXT} and the long prompt "
            "purchasing power parity helps, generate a Question"
        )

    def test_with_short_prompt(self, ppp_record):
        got = render_instruction(ppp_record, PromptSetting.WITH_SHORT_PROMPT)
        assert got.text == (
            f"Given the context {PPP_CONTEXT} and the short prompt "
            "purchasing power, generate a Question"
        )

    def test_without_prompt(self, ppp_record):
        got = render_instruction(ppp_record, PromptSetting.WITHOUT_PROMPT)
        assert got.text == f"Given the context {PPP_CONTEXT}, generate a Question"

    def test_long_prompt_marker_phrase(self, ppp_record):
        assert "and the long prompt" in render_instruction(
            ppp_record, PromptSetting.WITH_LONG_PROMPT
        ).text
        without = render_instruction(ppp_record, PromptSetting.WITHOUT_PROMPT).text
        # no "prompt" literal beyond whatever the context itself contains
        assert without.replace(PPP_CONTEXT, "").count("prompt") == 0


class TestSegmented:
    def test_source_with_short_prompt(self, ppp_record):
        got = render_segmented(ppp_record, PromptSetting.WITH_SHORT_PROMPT, Side.SOURCE)
        assert flatten(got) == f"[CLS] {PPP_CONTEXT} [SEP] purchasing power [SEP]"

    def test_source_with_long_prompt(self, ppp_record):
        got = render_segmented(ppp_record, PromptSetting.WITH_LONG_PROMPT, Side.SOURCE)
        assert flatten(got) == (
            f"[CLS] {PPP_CONTEXT} [SEP] purchasing power parity helps [SEP]"
        )

    def test_target_ignores_setting(self, ppp_record):
        for setting in SETTINGS:
            got = render_segmented(ppp_record, setting, Side.TARGET)
            assert flatten(got) == "[CLS] What does purchasing power parity do? [SEP]"

    def test_source_without_prompt_single_sep(self, ppp_record):
        got = render_segmented(ppp_record, PromptSetting.WITHOUT_PROMPT, Side.SOURCE)
        seps = [s for s in got.segments if s.marker is Marker.SEP]
        assert len(seps) == 1
        assert flatten(got) == f"[CLS] {PPP_CONTEXT} [SEP]"

    def test_segment_count_law(self, small_corpus):
        for record in small_corpus:
            for setting in SETTINGS:
                source = render_segmented(record, setting, Side.SOURCE)
                target = render_segmented(record, setting, Side.TARGET)
                n_sep = sum(1 for s in source.segments if s.marker is Marker.SEP)
                expected = 1 if setting is PromptSetting.WITHOUT_PROMPT else 2
                assert n_sep == expected
                assert sum(1 for s in target.segments if s.marker is Marker.SEP) == 1

    def test_shape_invariants_enforced(self):
        with pytest.raises(ValueError):
            Segmented((Segment(Marker.SEP, "x"), Segment(Marker.SEP)))
        with pytest.raises(ValueError):
            Segmented((Segment(Marker.CLS, "x"),))


_FIELD = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=40
).filter(lambda s: s.strip())


@settings(max_examples=60, deadline=None)
@given(context=_FIELD, long_prompt=_FIELD, short_prompt=_FIELD, question=_FIELD)
def test_rendering_deterministic_and_field_sensitive(
    context, long_prompt, short_prompt, question
):
    record = QuadRecord(
        id="r", subject="Science", context=context, long_prompt=long_prompt,
        short_prompt=short_prompt, question=question,
    )
    for setting in SETTINGS:
        a = render_instruction(record, setting)
        b = render_instruction(record, setting)
        assert a == b and isinstance(a, Instruction)
        src = render_segmented(record, setting, Side.SOURCE)
        assert flatten(src) == flatten(render_segmented(record, setting, Side.SOURCE))
    # distinct cue contents produce distinct long/short renderings
    if long_prompt != short_prompt:
        assert render_instruction(record, PromptSetting.WITH_LONG_PROMPT) != (
            render_instruction(record, PromptSetting.WITH_SHORT_PROMPT)
        )


class TestParseSetting:
    def test_aliases(self):
        assert parse_setting("long") is PromptSetting.WITH_LONG_PROMPT
        assert parse_setting("short") is PromptSetting.WITH_SHORT_PROMPT
        assert parse_setting("without") is PromptSetting.WITHOUT_PROMPT
        assert parse_setting("with_long_prompt") is PromptSetting.WITH_LONG_PROMPT

    def test_unknown(self):
        with pytest.raises(ValueError):
            parse_setting("medium")


def _render_kind(record, setting, kind):
    if kind == "instruction":
        return render_instruction(record, setting).text
    side = Side.SOURCE if kind == "segmented-source" else Side.TARGET
    return flatten(render_segmented(record, setting, side))


class TestGoldenFiles:
    @pytest.mark.parametrize("setting", SETTINGS, ids=lambda s: s.value)
    @pytest.mark.parametrize(
        "kind", ("instruction", "segmented-source", "segmented-target")
    )
    def test_byte_identical_to_golden(self, setting, kind):
        path = os.path.join(GOLDEN_DIR, f"{kind}__{setting.value}.txt")
        with open(path, encoding="utf-8") as f:
            want = f.read()
        got = "".join(
            _render_kind(r, setting, kind) + "\n" for r in five_record_fixture()
        )
        assert got == want

from __future__ import annotations

import pytest

from qgbench.corpus import QuadRecord, save_corpus

from synthcorpus import build_replica

PPP_CONTEXT = (
    "Purchasing power parity (PPP) is an economic indicator that signifies the "
    "purchasing power of the currencies of various nations of the world against "
    "each other. It helps in comparing living standards between different "
    "countries and estimating economic productivity."
)


@pytest.fixture
def ppp_record() -> QuadRecord:
    return QuadRecord(
        id="econ-ppp",
        subject="Economics",
        context=PPP_CONTEXT,
        long_prompt="purchasing power parity helps",
        short_prompt="purchasing power",
        question="What does purchasing power parity do?",
    )


def five_record_fixture() -> list[QuadRecord]:
    """Small fixed corpus used by the golden rendering files."""
    return [
        QuadRecord(
            id="econ-ppp",
            subject="Economics",
            context=PPP_CONTEXT,
            long_prompt="purchasing power parity helps",
            short_prompt="purchasing power",
            question="What does purchasing power parity do?",
        ),
        QuadRecord(
            id="hist-ramabai",
            subject="History",
            context=(
                "Pandita Ramabai was a social reformer and scholar who championed "
                "the education of women in nineteenth-century India and founded "
                "institutions that trained widows to become teachers."
            ),
            long_prompt="pandita ramabai championed education",
            short_prompt="pandita ramabai",
            question="How did Pandita Ramabai break stereotypes?",
        ),
        QuadRecord(
            id="geo-dolphin",
            subject="Geography",
            context=(
                "The Ganges river dolphin lives in the murky waters of the "
                "Ganges-Brahmaputra river system and relies on echolocation "
                "rather than eyesight to navigate and hunt."
            ),
            long_prompt="ganges river dolphin relies on echolocation",
            short_prompt="ganges river dolphin",
            question="Why is the Ganges river dolphin blind?",
        ),
        QuadRecord(
            id="env-oceans",
            subject="EnvironmentalStudies",
            context=(
                "Ocean acidification occurs when seawater absorbs carbon dioxide "
                "from the atmosphere, lowering its pH and making it harder for "
                "shell-forming organisms to build calcium carbonate structures."
            ),
            long_prompt="ocean acidification lowers seawater ph",
            short_prompt="ocean acidification",
            question="What happens if oceans acidify?",
        ),
        QuadRecord(
            id="econ-ubi",
            subject="Economics",
            context=(
                "Universal basic income (UBI) is a policy proposal in which every "
                "citizen receives a regular unconditional cash payment from the "
                "state, intended to guarantee a minimum standard of living."
            ),
            long_prompt="universal basic income guarantees a minimum",
            short_prompt="universal basic income",
            question="Does universal basic income (UBI) reduce poverty?",
        ),
    ]


@pytest.fixture
def small_corpus() -> list[QuadRecord]:
    return five_record_fixture()


@pytest.fixture(scope="session")
def replica_records() -> list[QuadRecord]:
    return build_replica()


@pytest.fixture(scope="session")
def replica_path(replica_records, tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("corpus") / "eduprobe-replica.ndjson"
    save_corpus(replica_records, str(path))
    return str(path)

"""Quadruple corpus handling: parse, validate, split, summarize.

On-disk format is UTF-8 newline-delimited JSON, one record per line, with
fields exactly `id, subject, context, long_prompt, short_prompt, question`.
Records are immutable after parsing and every operation here is pure, so
concurrent use needs no coordination.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import QGBenchError
from .ioutil import dump_ndjson
from .metrics import tokenize

FIELDS = ("id", "subject", "context", "long_prompt", "short_prompt", "question")

KNOWN_SUBJECTS = (
    "History",
    "Geography",
    "Economics",
    "EnvironmentalStudies",
    "Science",
)


class CorpusError(QGBenchError):
    pass


class MalformedLine(CorpusError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: not a valid record" + (f" ({detail})" if detail else ""))


class MissingField(CorpusError):
    def __init__(self, field: str, line_no: int):
        self.field = field
        self.line_no = line_no
        super().__init__(f"line {line_no}: field {field!r} missing or empty")


class DuplicateId(CorpusError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate record id {record_id!r}")


class EmptyCorpus(CorpusError):
    pass


@dataclass(frozen=True)
class QuadRecord:
    """One annotated sample: a context passage, two generation cues of
    different lengths, and the gold question. Subjects outside the five
    known names are allowed and reported as-is."""

    id: str
    subject: str
    context: str
    long_prompt: str
    short_prompt: str
    question: str

    def as_dict(self) -> dict[str, str]:
        return {f: getattr(self, f) for f in FIELDS}


def parse_quads(lines: Iterable[str]) -> list[QuadRecord]:
    """Parse newline-delimited records in file order; blank lines are
    skipped. Raises MalformedLine, MissingField (also for present-but-blank
    values), or DuplicateId."""
    records: list[QuadRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, exc.msg) from None
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected an object")
        values = {}
        for field in FIELDS:
            value = obj.get(field)
            if not isinstance(value, str) or not value.strip():
                raise MissingField(field, line_no)
            values[field] = value
        if values["id"] in seen:
            raise DuplicateId(values["id"])
        seen.add(values["id"])
        records.append(QuadRecord(**values))
    return records


def serialize_quads(records: Iterable[QuadRecord]) -> str:
    return dump_ndjson(r.as_dict() for r in records)


def load_corpus(path: str) -> list[QuadRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_quads(f)


def save_corpus(records: Iterable[QuadRecord], path: str) -> None:
    from .ioutil import atomic_write_text

    atomic_write_text(path, serialize_quads(records))


# --- Validation ---------------------------------------------------------------


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Issue:
    severity: Severity
    code: str
    message: str


def validate(record: QuadRecord) -> list[Issue]:
    """Field-level checks. Errors for blank fields; warnings when the short
    prompt does not occur in the leading half of the context (it is meant to
    be drawn from the beginning of the passage) or when the question is not
    phrased as one."""
    issues: list[Issue] = []
    for field in FIELDS:
        if not getattr(record, field).strip():
            issues.append(Issue(Severity.ERROR, "EmptyField", f"{field} is empty"))

    if record.short_prompt.strip() and record.context.strip():
        head = record.context[: math.ceil(len(record.context) / 2)]
        needle = " ".join(tokenize(record.short_prompt))
        haystack = " ".join(tokenize(head))
        if needle and needle not in haystack:
            issues.append(
                Issue(
                    Severity.WARNING,
                    "ShortPromptNotInContextHead",
                    "short prompt not found in the first half of the context",
                )
            )

    if record.question.strip() and not record.question.rstrip().endswith("?"):
        issues.append(
            Issue(
                Severity.WARNING,
                "QuestionNotInterrogative",
                "question does not end with '?'",
            )
        )
    return issues


# --- Split --------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    ratio: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"split ratio must be in (0, 1), got {self.ratio}")


_MASK64 = (1 << 64) - 1


def _splitmix64(seed: int):
    """SplitMix64 stream; fully specified here so splits reproduce across
    Python versions and platforms."""
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def _shuffled_indices(n: int, seed: int) -> list[int]:
    # Fisher-Yates driven by SplitMix64; modulo bias is irrelevant at these
    # sizes and keeps the procedure easy to restate
    rng = _splitmix64(seed)
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = next(rng) % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def split(
    records: Sequence[QuadRecord], spec: SplitSpec
) -> tuple[list[QuadRecord], list[QuadRecord]]:
    """Deterministic shuffle split: train gets floor(ratio * N) records,
    test the remainder. Same records + same seed always give the same
    partition."""
    if not records:
        raise EmptyCorpus("cannot split an empty corpus")
    order = _shuffled_indices(len(records), spec.seed)
    k = math.floor(spec.ratio * len(records))
    train = [records[i] for i in order[:k]]
    test = [records[i] for i in order[k:]]
    return train, test


# --- Statistics -----------------------------------------------------------------


@dataclass(frozen=True)
class BigramShare:
    bigram: str
    count: int
    share: float  # percent of questions with >= 2 tokens


@dataclass(frozen=True)
class DatasetStats:
    total: int
    per_subject: dict[str, int]
    mean_words: dict[str, float] | None
    leading_bigrams: list[BigramShare]


def stats(records: Sequence[QuadRecord]) -> DatasetStats:
    """Corpus summary: per-subject counts, whitespace-token mean field
    lengths, and the leading-bigram distribution of the questions (first two
    normalized tokens), sorted by share descending."""
    per_subject: dict[str, int] = {}
    for r in records:
        per_subject[r.subject] = per_subject.get(r.subject, 0) + 1

    mean_words = None
    if records:
        n = len(records)
        mean_words = {
            field: sum(len(getattr(r, field).split()) for r in records) / n
            for field in ("context", "long_prompt", "short_prompt", "question")
        }

    bigram_counts: dict[str, int] = {}
    eligible = 0
    for r in records:
        toks = tokenize(r.question)
        if len(toks) >= 2:
            eligible += 1
            key = f"{toks[0]} {toks[1]}"
            bigram_counts[key] = bigram_counts.get(key, 0) + 1
    leading = [
        BigramShare(bigram, count, 100.0 * count / eligible)
        for bigram, count in sorted(bigram_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]

    return DatasetStats(
        total=len(records),
        per_subject=per_subject,
        mean_words=mean_words,
        leading_bigrams=leading,
    )

"""Question typology and rendering of the benchmark report tables.

The classifier is an explicit rule cascade over normalized leading tokens;
it is a deterministic proxy for a manual typology, so it is checked against
known example sentences rather than corpus-level percentages. Whether a
kind counts as deep reasoning is table-driven, never inferred from text.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .agreement import CRITERIA, AgreementReport, RatingTableRow
from .corpus import DatasetStats
from .errors import QGBenchError
from .metrics import ScoreReport, tokenize
from .prompts import PromptSetting


class ReportError(QGBenchError):
    pass


class EmptyInput(ReportError):
    pass


class QuestionCategory(str, Enum):
    PROCEDURAL = "procedural"
    CAUSE = "cause"
    VERIFICATION = "verification"
    CONSEQUENCE = "consequence"
    OTHER = "other"


DEEP_CATEGORIES = frozenset(
    {QuestionCategory.PROCEDURAL, QuestionCategory.CAUSE, QuestionCategory.CONSEQUENCE}
)


@dataclass(frozen=True)
class QuestionKind:
    category: QuestionCategory
    deep: bool


_PROCEDURAL_SECOND = {"did", "do", "does", "can", "could", "should", "would", "to"}
_CAUSE_SECOND = {
    "is", "are", "was", "were", "did", "do", "does",
    "isn't", "aren't", "wasn't", "weren't", "didn't", "don't", "doesn't",
    "isn’t", "aren’t", "wasn’t", "weren’t",
    "didn’t", "don’t", "doesn’t",
}
_VERIFICATION_FIRST = {
    "does", "do", "did", "is", "are", "was", "were",
    "can", "could", "should", "would", "has", "have",
}


def _kind(category: QuestionCategory) -> QuestionKind:
    return QuestionKind(category, category in DEEP_CATEGORIES)


def classify_question(question: str) -> QuestionKind:
    """Rule cascade on the leading normalized tokens. Consequence patterns
    ("what happens ...", "how does ... affect ...") are checked before the
    procedural and verification rules so they cannot be shadowed."""
    toks = tokenize(question)
    if not toks:
        return _kind(QuestionCategory.OTHER)
    first = toks[0]
    second = toks[1] if len(toks) > 1 else ""

    if first == "what" and second == "happens":
        return _kind(QuestionCategory.CONSEQUENCE)
    if first == "how" and second == "does" and any(t.startswith("affect") for t in toks[2:]):
        return _kind(QuestionCategory.CONSEQUENCE)
    if first == "how" and second in _PROCEDURAL_SECOND:
        return _kind(QuestionCategory.PROCEDURAL)
    if first == "why" and second in _CAUSE_SECOND:
        return _kind(QuestionCategory.CAUSE)
    if first in _VERIFICATION_FIRST:
        return _kind(QuestionCategory.VERIFICATION)
    return _kind(QuestionCategory.OTHER)


def deep_ratio(questions: Sequence[str]) -> float:
    """Fraction of questions whose kind involves deep reasoning."""
    if not questions:
        raise EmptyInput("deep_ratio needs at least one question")
    deep = sum(1 for q in questions if classify_question(q).deep)
    return deep / len(questions)


def kind_histogram(questions: Sequence[str]) -> dict[str, int]:
    hist = {c.value: 0 for c in QuestionCategory}
    for q in questions:
        hist[classify_question(q).category.value] += 1
    return hist


# --- Rendering -------------------------------------------------------------------

_SETTING_ORDER = (
    PromptSetting.WITH_LONG_PROMPT,
    PromptSetting.WITH_SHORT_PROMPT,
    PromptSetting.WITHOUT_PROMPT,
)

_SETTING_LABEL = {
    PromptSetting.WITH_LONG_PROMPT.value: "With long prompt",
    PromptSetting.WITH_SHORT_PROMPT.value: "With short prompt",
    PromptSetting.WITHOUT_PROMPT.value: "Without prompt",
}

_METRIC_HEADERS = (
    "ROUGE-2 Precision", "ROUGE-2 Recall", "ROUGE-2 F1",
    "ROUGE-L Precision", "ROUGE-L Recall", "ROUGE-L F1",
    "METEOR", "CHrF (%)", "BLEU (%)", "BERTScore",
)


def _metric_cells(report: ScoreReport) -> list[float | None]:
    m = report.corpus_means
    return [
        m.rouge2.precision, m.rouge2.recall, m.rouge2.f1,
        m.rouge_l.precision, m.rouge_l.recall, m.rouge_l.f1,
        m.meteor, m.chrf * 100.0, m.bleu * 100.0,
        m.bertscore.f1 if m.bertscore else None,
    ]


def _fmt_metric(value: float | None, column: int) -> str:
    if value is None:
        return "-"
    return f"{value:.2f}" if column in (7, 8) else f"{value:.3f}"


def _md_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(headers) + " |"]
    lines.append("|" + "|".join(" --- " for _ in headers) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return lines


def _grouped_by_setting(items, setting_of):
    groups: dict[str, list] = {}
    for item in items:
        groups.setdefault(setting_of(item), []).append(item)
    for setting in _SETTING_ORDER:
        if setting.value in groups:
            yield setting.value, groups[setting.value]
    # unknown settings, if any, render after the canonical three
    for setting in sorted(set(groups) - {s.value for s in _SETTING_ORDER}):
        yield setting, groups[setting]


def _bold_maxima(cell_rows: list[list[float | None]]) -> list[list[bool]]:
    flags = [[False] * len(row) for row in cell_rows]
    if not cell_rows:
        return flags
    for col in range(len(cell_rows[0])):
        values = [row[col] for row in cell_rows if row[col] is not None]
        if not values:
            continue
        best = max(values)
        for i, row in enumerate(cell_rows):
            if row[col] is not None and row[col] == best:
                flags[i][col] = True
    return flags


def render_report(
    stats: DatasetStats | None = None,
    scores: Sequence[ScoreReport] = (),
    agreement: AgreementReport | None = None,
    rating_rows: Sequence[RatingTableRow] = (),
    *,
    top_bigrams: int = 10,
    title: str = "Question generation benchmark report",
) -> dict[str, str]:
    """Deterministic document set: a markdown report plus one CSV per table.
    Identical inputs produce byte-identical outputs."""
    md: list[str] = [f"# {title}", ""]
    docs: dict[str, str] = {}

    if stats is not None:
        md += ["## Corpus statistics", "", f"Total records: {stats.total}", ""]
        if stats.per_subject:
            rows = [[s, str(n)] for s, n in sorted(stats.per_subject.items())]
            md += _md_table(("Subject", "Records"), rows) + [""]
        if stats.mean_words:
            rows = [[f, f"{stats.mean_words[f]:.2f}"] for f in
                    ("context", "long_prompt", "short_prompt", "question")]
            md += _md_table(("Field", "Mean words"), rows) + [""]
        if stats.leading_bigrams:
            top = stats.leading_bigrams[:top_bigrams]
            rows = [[b.bigram, str(b.count), f"{b.share:.2f}"] for b in top]
            md += ["### Leading bigrams", ""]
            md += _md_table(("Bigram", "Count", "Share (%)"), rows) + [""]
            csv = ["bigram,count,share_pct"]
            csv += [f"{b.bigram},{b.count},{b.share:.4f}" for b in stats.leading_bigrams]
            docs["leading_bigrams.csv"] = "\n".join(csv) + "\n"

    md += ["## Automatic evaluation", ""]
    auto_csv = ["setting,model," + ",".join(
        c.lower().replace(" ", "_").replace("(%)", "pct").replace("-", "")
        for c in _METRIC_HEADERS
    )]
    if scores:
        for setting, group in _grouped_by_setting(scores, lambda s: s.setting):
            group = sorted(group, key=lambda s: s.model_id)
            md += [f"### {_SETTING_LABEL.get(setting, setting)}", ""]
            cell_rows = [_metric_cells(s) for s in group]
            bold = _bold_maxima(cell_rows)
            table_rows = []
            for s, cells, flags in zip(group, cell_rows, bold):
                rendered = [
                    f"**{_fmt_metric(v, i)}**" if flag and v is not None else _fmt_metric(v, i)
                    for i, (v, flag) in enumerate(zip(cells, flags))
                ]
                table_rows.append([s.model_id] + rendered)
                auto_csv.append(
                    ",".join([setting, s.model_id] + [
                        "" if v is None else f"{v:.6f}" for v in cells
                    ])
                )
            md += _md_table(("Model",) + _METRIC_HEADERS, table_rows) + [""]
    else:
        md += ["_No scored runs._", ""]
    docs["automatic_metrics.csv"] = "\n".join(auto_csv) + "\n"

    md += ["## Human evaluation", ""]
    human_csv = ["setting,model," + ",".join(c.lower() for c in CRITERIA) + ",n_ratings"]
    if rating_rows:
        for setting, group in _grouped_by_setting(rating_rows, lambda r: r.setting):
            group = sorted(group, key=lambda r: r.model_id)
            md += [f"### {_SETTING_LABEL.get(setting, setting)}", ""]
            cell_rows = [[row.means[c] for c in CRITERIA] for row in group]
            bold = _bold_maxima(cell_rows)
            table_rows = []
            for row, cells, flags in zip(group, cell_rows, bold):
                rendered = [
                    f"**{v:.2f}**" if flag else f"{v:.2f}"
                    for v, flag in zip(cells, flags)
                ]
                table_rows.append([row.model_id] + rendered)
                human_csv.append(
                    ",".join([setting, row.model_id]
                             + [f"{v:.4f}" for v in cells] + [str(row.n_ratings)])
                )
            md += _md_table(("Model",) + CRITERIA, table_rows) + [""]
    else:
        md += ["_No ratings collected._", ""]
    docs["human_eval.csv"] = "\n".join(human_csv) + "\n"

    if agreement is not None:
        md += ["## Inter-annotator agreement", ""]
        md += [f"Raters: {agreement.n_raters}; items: {agreement.n_items}", ""]
        rows = [[c, f"{agreement.kappa[c]:.2f}"] for c in CRITERIA]
        md += _md_table(("Criterion", "Fleiss' kappa"), rows) + [""]
        csv = ["criterion,fleiss_kappa"]
        csv += [f"{c},{agreement.kappa[c]:.6f}" for c in CRITERIA]
        docs["agreement.csv"] = "\n".join(csv) + "\n"

    docs["report.md"] = "\n".join(md).rstrip("\n") + "\n"
    return docs


def write_report(docs: dict[str, str], out_dir: str) -> list[str]:
    from .ioutil import atomic_write_text
    import os

    paths = []
    for name, content in sorted(docs.items()):
        path = os.path.join(out_dir, name)
        atomic_write_text(path, content)
        paths.append(path)
    return paths

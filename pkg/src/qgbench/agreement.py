"""Human-evaluation data model: five-criterion ratings and Fleiss' kappa.

Ratings are append-only; a resubmission by the same rater for the same
target overwrites the earlier one (latest wins). Kappa requires complete
coverage: every rater must have rated every target, and incomplete designs
are rejected rather than approximated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import QGBenchError
from .ioutil import dump_ndjson, iter_ndjson, now_iso

CRITERIA = (
    "Grammaticality",
    "Appropriateness",
    "Relevance",
    "Complexity",
    "Novelty",
)

SCORE_MIN = 1
SCORE_MAX = 5


class AgreementError(QGBenchError):
    pass


class InvalidRating(AgreementError):
    pass


class RaggedMatrix(AgreementError):
    pass


class TooFewRaters(AgreementError):
    pass


class UnevenCoverage(AgreementError):
    def __init__(self, missing: list[tuple[str, str]]):
        self.missing = missing
        preview = ", ".join(f"{r}->{t}" for r, t in missing[:5])
        more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
        super().__init__(f"missing (rater, target) ratings: {preview}{more}")


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    target_id: str
    scores: Mapping[str, int]
    submitted_at: str

    def as_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "target_id": self.target_id,
            "scores": dict(self.scores),
            "submitted_at": self.submitted_at,
        }


def validate_rating(obj: dict) -> RatingRecord:
    """Check an incoming rating payload; raises InvalidRating with a
    field-level message so the service can answer 400 usefully."""
    if not isinstance(obj, dict):
        raise InvalidRating("rating must be an object")
    rater = obj.get("rater_id")
    target = obj.get("target_id")
    if not isinstance(rater, str) or not rater.strip():
        raise InvalidRating("rater_id must be a non-empty string")
    if not isinstance(target, str) or not target.strip():
        raise InvalidRating("target_id must be a non-empty string")
    scores = obj.get("scores")
    if not isinstance(scores, dict):
        raise InvalidRating("scores must be an object")
    missing = [c for c in CRITERIA if c not in scores]
    if missing:
        raise InvalidRating(f"missing criteria: {', '.join(missing)}")
    extra = [c for c in scores if c not in CRITERIA]
    if extra:
        raise InvalidRating(f"unknown criteria: {', '.join(sorted(extra))}")
    for criterion in CRITERIA:
        value = scores[criterion]
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidRating(f"{criterion} score must be an integer")
        if not SCORE_MIN <= value <= SCORE_MAX:
            raise InvalidRating(
                f"{criterion} score {value} outside {SCORE_MIN}..{SCORE_MAX}"
            )
    submitted = obj.get("submitted_at") or now_iso()
    if not isinstance(submitted, str):
        raise InvalidRating("submitted_at must be a string timestamp")
    return RatingRecord(rater, target, {c: scores[c] for c in CRITERIA}, submitted)


def load_ratings(path: str) -> list[RatingRecord]:
    return [validate_rating(row) for row in iter_ndjson(path)]


def dump_ratings(ratings: Iterable[RatingRecord]) -> str:
    return dump_ndjson(r.as_dict() for r in ratings)


def dedupe_latest(ratings: Sequence[RatingRecord]) -> dict[tuple[str, str], RatingRecord]:
    """Latest-wins per (rater, target), in submission (replay) order."""
    out: dict[tuple[str, str], RatingRecord] = {}
    for rating in ratings:
        out[(rating.rater_id, rating.target_id)] = rating
    return out


@dataclass(frozen=True)
class AgreementReport:
    kappa: dict[str, float]
    n_items: int
    n_raters: int

    def as_dict(self) -> dict:
        return {"kappa": dict(self.kappa), "n_items": self.n_items, "n_raters": self.n_raters}


def fleiss_kappa(counts: Sequence[Sequence[int]], n_raters: int) -> float:
    """Chance-corrected multi-rater agreement over a rating-count matrix
    (rows = items, columns = categories, cells = how many raters picked the
    category). Unanimity across a degenerate single-category table returns
    exactly 1."""
    if n_raters < 2:
        raise TooFewRaters(f"need at least 2 raters, got {n_raters}")
    if not counts:
        raise RaggedMatrix("empty matrix")
    width = len(counts[0])
    for i, row in enumerate(counts):
        if len(row) != width:
            raise RaggedMatrix(f"row {i} has {len(row)} columns, expected {width}")
        if sum(row) != n_raters:
            raise RaggedMatrix(f"row {i} sums to {sum(row)}, expected {n_raters}")

    n_items = len(counts)
    p_bar = sum(
        (sum(v * v for v in row) - n_raters) / (n_raters * (n_raters - 1))
        for row in counts
    ) / n_items
    total = n_items * n_raters
    pe_bar = sum((sum(row[j] for row in counts) / total) ** 2 for j in range(width))
    if 1.0 - pe_bar == 0.0:
        return 1.0
    return (p_bar - pe_bar) / (1.0 - pe_bar)


def kappa_per_criterion(ratings: Sequence[RatingRecord]) -> AgreementReport:
    """Build the five-category count matrix per criterion and score each
    with Fleiss' kappa. Every target must be rated by the same rater set;
    gaps raise UnevenCoverage listing the missing pairs."""
    latest = dedupe_latest(ratings)
    raters = sorted({r for r, _ in latest})
    targets = sorted({t for _, t in latest})
    if len(raters) < 2:
        raise TooFewRaters(f"need at least 2 raters, got {len(raters)}")

    missing = [
        (rater, target)
        for rater in raters
        for target in targets
        if (rater, target) not in latest
    ]
    if missing:
        raise UnevenCoverage(missing)

    n_categories = SCORE_MAX - SCORE_MIN + 1
    kappas: dict[str, float] = {}
    for criterion in CRITERIA:
        matrix = []
        for target in targets:
            row = [0] * n_categories
            for rater in raters:
                score = latest[(rater, target)].scores[criterion]
                row[score - SCORE_MIN] += 1
            matrix.append(row)
        kappas[criterion] = fleiss_kappa(matrix, len(raters))
    return AgreementReport(kappa=kappas, n_items=len(targets), n_raters=len(raters))


@dataclass(frozen=True)
class RatingTableRow:
    model_id: str
    setting: str
    means: dict[str, float]
    n_ratings: int


def aggregate_ratings(
    ratings: Sequence[RatingRecord],
    target_meta: Mapping[str, tuple[str, str]],
) -> list[RatingTableRow]:
    """Mean score per (model, setting, criterion) over deduplicated ratings.
    target_meta maps target_id -> (model_id, setting); targets without
    metadata are skipped. Rounding happens at render time, not here."""
    groups: dict[tuple[str, str], list[RatingRecord]] = {}
    for rating in dedupe_latest(ratings).values():
        meta = target_meta.get(rating.target_id)
        if meta is None:
            continue
        groups.setdefault(meta, []).append(rating)

    rows = []
    for (model_id, setting), group in sorted(groups.items()):
        means = {
            criterion: sum(r.scores[criterion] for r in group) / len(group)
            for criterion in CRITERIA
        }
        rows.append(RatingTableRow(model_id, setting, means, len(group)))
    return rows

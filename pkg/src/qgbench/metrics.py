"""Automatic evaluation of generated questions against gold references.

Scores are stored in [0, 1]; rendered tables show CHrF and BLEU times 100.
Parameter conventions (documented so numbers are interpretable across
scoring packages): ROUGE uses clipped n-gram overlap and LCS; METEOR uses
alpha=0.9, beta=3, gamma=0.5 with exact + Porter-stem match stages only;
CHrF uses character 6-grams with beta=2; BLEU uses 4-grams with
add-epsilon smoothing on zero counts and skips orders the candidate is too
short to populate. Zero denominators yield 0 everywhere, never NaN.
"""

from __future__ import annotations

import hashlib
import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import TYPE_CHECKING, Mapping, Protocol, Sequence

from ._porter import porter_stem
from .errors import QGBenchError

if TYPE_CHECKING:  # pragma: no cover
    from .generation import GenerationRun

_STRIP_CHARS = string.punctuation + "“”‘’…—–«»¡¿"

BLEU_EPSILON = 1e-9


class MetricsError(QGBenchError):
    pass


class DimensionMismatch(MetricsError):
    pass


class NoScorablePairs(MetricsError):
    pass


class MissingGold(MetricsError):
    pass


class MissingEmbedding(MetricsError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "PRF":
        if precision + recall == 0:
            return cls(precision, recall, 0.0)
        f1 = 2.0 * precision * recall / (precision + recall)
        return cls(precision, recall, f1)

    def as_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


ZERO_PRF = PRF(0.0, 0.0, 0.0)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum((cand & ref).values())


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 2) -> PRF:
    """Clipped n-gram overlap precision/recall over token sequences."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngram_counts(candidate, n)
    ref = _ngram_counts(reference, n)
    overlap = _clipped_overlap(cand, ref)
    p = overlap / sum(cand.values()) if cand else 0.0
    r = overlap / sum(ref.values()) if ref else 0.0
    return PRF.from_pr(p, r)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PRF:
    """LCS-based precision/recall over token sequences."""
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate) if candidate else 0.0
    r = lcs / len(reference) if reference else 0.0
    return PRF.from_pr(p, r)


# --- METEOR -----------------------------------------------------------------

_ALIGN_SEARCH_CAP = 10_000


def _meteor_alignment(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """One-to-one token alignment: exact matches first, Porter-stem matches
    among the per-type leftovers. The match count per stage is forced by
    multiset arithmetic; among the assignments reaching it we pick one
    minimizing the chunk count, by exhaustive search when small enough and
    by a contiguity-preferring greedy pass otherwise."""
    c_counts = Counter(cand)
    r_counts = Counter(ref)

    groups: list[tuple[list[int], list[int], int]] = []
    for key in sorted(set(c_counts) & set(r_counts)):
        cis = [i for i, t in enumerate(cand) if t == key]
        rjs = [j for j, t in enumerate(ref) if t == key]
        groups.append((cis, rjs, min(len(cis), len(rjs))))

    # stem stage over the per-type excess: any instance of an excess type
    # may be the one the exact stage left behind, so groups list them all
    # and global injectivity during assignment settles which
    cand_excess = {k: c_counts[k] - r_counts.get(k, 0) for k in c_counts}
    ref_excess = {k: r_counts[k] - c_counts.get(k, 0) for k in r_counts}
    stem_cis: dict[str, list[int]] = {}
    stem_rjs: dict[str, list[int]] = {}
    stem_c_need: dict[str, int] = {}
    stem_r_need: dict[str, int] = {}
    for k, excess in cand_excess.items():
        if excess > 0:
            s = porter_stem(k)
            stem_cis.setdefault(s, []).extend(i for i, t in enumerate(cand) if t == k)
            stem_c_need[s] = stem_c_need.get(s, 0) + excess
    for k, excess in ref_excess.items():
        if excess > 0:
            s = porter_stem(k)
            stem_rjs.setdefault(s, []).extend(j for j, t in enumerate(ref) if t == k)
            stem_r_need[s] = stem_r_need.get(s, 0) + excess
    for s in sorted(set(stem_c_need) & set(stem_r_need)):
        need = min(stem_c_need[s], stem_r_need[s])
        groups.append((sorted(stem_cis[s]), sorted(stem_rjs[s]), need))

    size = 1
    for cis, rjs, need in groups:
        size *= math.comb(len(cis), need) * math.perm(len(rjs), need)
        if size > _ALIGN_SEARCH_CAP:
            return _greedy_alignment(groups)
    best: list[tuple[int, int]] | None = None
    best_chunks = None
    for pairs in _enumerate_assignments(groups, 0, frozenset(), frozenset()):
        chunks = _chunk_count(pairs)
        if best_chunks is None or chunks < best_chunks:
            best, best_chunks = pairs, chunks
    return best or []


def _enumerate_assignments(groups, idx, used_c, used_r):
    # a token deferred from the exact stage can reappear in a stem-stage
    # group, so injectivity is enforced globally; branches that starve a
    # later group below its forced match count are pruned
    if idx == len(groups):
        yield []
        return
    cis, rjs, need = groups[idx]
    avail_c = [i for i in cis if i not in used_c]
    avail_r = [j for j in rjs if j not in used_r]
    if len(avail_c) < need or len(avail_r) < need:
        return
    for chosen_c in combinations(avail_c, need):
        for chosen_r in permutations(avail_r, need):
            rest_iter = _enumerate_assignments(
                groups, idx + 1, used_c | set(chosen_c), used_r | set(chosen_r)
            )
            for rest in rest_iter:
                yield list(zip(chosen_c, chosen_r)) + rest


def _greedy_alignment(groups) -> list[tuple[int, int]]:
    # leftmost-first per group, preferring the ref slot that continues the
    # run started by the previous candidate token
    pairs: dict[int, int] = {}
    taken: set[int] = set()
    for cis, rjs, need in groups:
        made = 0
        for i in cis:
            if made == need:
                break
            if i in pairs:
                continue
            avail = [j for j in rjs if j not in taken]
            if not avail:
                break
            j = pairs.get(i - 1, -2) + 1
            pick = j if j in avail else avail[0]
            pairs[i] = pick
            taken.add(pick)
            made += 1
    return sorted(pairs.items())


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(
    candidate: Sequence[str],
    reference: Sequence[str],
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5,
) -> float:
    """Unigram alignment score: weighted harmonic mean of precision and
    recall, discounted by a fragmentation penalty gamma * (chunks/m)^beta."""
    pairs = _meteor_alignment(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(reference)
    f_mean = p * r / (alpha * p + (1.0 - alpha) * r)
    penalty = gamma * (_chunk_count(pairs) / m) ** beta
    return f_mean * (1.0 - penalty)


# --- CHrF -------------------------------------------------------------------


def _char_ngram_counts(text: str, n: int) -> Counter:
    chars = "".join(text.split())
    return Counter(chars[i : i + n] for i in range(len(chars) - n + 1))


def chrf(candidate: str, reference: str, max_n: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-beta over whitespace-stripped text, averaging
    precision and recall across orders 1..max_n; orders with no reference
    n-grams are skipped."""
    precisions = []
    recalls = []
    for n in range(1, max_n + 1):
        ref = _char_ngram_counts(reference, n)
        if not ref:
            continue
        cand = _char_ngram_counts(candidate, n)
        overlap = _clipped_overlap(cand, ref)
        precisions.append(overlap / sum(cand.values()) if cand else 0.0)
        recalls.append(overlap / sum(ref.values()))
    if not precisions:
        return 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    denom = beta * beta * p + r
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * p * r / denom


# --- BLEU -------------------------------------------------------------------


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU: geometric mean of clipped n-gram precisions over the
    orders the candidate can populate, times the brevity penalty."""
    if not candidate:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        cand = _ngram_counts(candidate, n)
        total = sum(cand.values())
        if total == 0:
            continue
        clipped = _clipped_overlap(cand, _ngram_counts(reference, n))
        p = clipped / total if clipped > 0 else BLEU_EPSILON / total
        logs.append(math.log(p))
    if not logs:
        return 0.0
    score = math.exp(sum(logs) / len(logs))
    return _brevity_penalty(len(candidate), len(reference)) * score


def corpus_bleu(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]], max_n: int = 4
) -> float:
    """Corpus-level BLEU: pools clipped and total counts over all pairs
    before combining, with the brevity penalty on summed lengths."""
    clipped = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for candidate, reference in pairs:
        cand_len += len(candidate)
        ref_len += len(reference)
        for n in range(1, max_n + 1):
            cand = _ngram_counts(candidate, n)
            totals[n - 1] += sum(cand.values())
            clipped[n - 1] += _clipped_overlap(cand, _ngram_counts(reference, n))
    logs = []
    for c, t in zip(clipped, totals):
        if t == 0:
            continue
        p = c / t if c > 0 else BLEU_EPSILON / t
        logs.append(math.log(p))
    if not logs or cand_len == 0:
        return 0.0
    return _brevity_penalty(cand_len, ref_len) * math.exp(sum(logs) / len(logs))


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len < ref_len:
        return math.exp(1.0 - ref_len / cand_len)
    return 1.0


# --- BERTScore --------------------------------------------------------------


class EmbeddingProvider(Protocol):
    """Supplies one unit vector per token; injected so the metric stays
    testable without bundling a neural model."""

    def vectors(self, tokens: Sequence[str]) -> list[list[float]]: ...


class HashedBasisEmbeddings:
    """Deterministic stand-in provider: each token maps to a standard basis
    vector picked by hashing. Distinct tokens are orthogonal up to hash
    collisions; suitable for offline runs and tests."""

    def __init__(self, dim: int = 4096):
        self.dim = dim

    def _index(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def vectors(self, tokens: Sequence[str]) -> list[list[float]]:
        out = []
        for tok in tokens:
            vec = [0.0] * self.dim
            vec[self._index(tok)] = 1.0
            out.append(vec)
        return out


class FileEmbeddings:
    """Per-token vectors from a JSON file {token: [floats]}, unit-normalized
    on load. Unknown tokens raise MissingEmbedding."""

    def __init__(self, path: str):
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        self._table: dict[str, list[float]] = {}
        for tok, vec in raw.items():
            norm = math.sqrt(sum(x * x for x in vec))
            if norm == 0:
                raise ValueError(f"zero vector for token {tok!r}")
            self._table[tok] = [x / norm for x in vec]

    def vectors(self, tokens: Sequence[str]) -> list[list[float]]:
        try:
            return [self._table[tok] for tok in tokens]
        except KeyError as exc:
            raise MissingEmbedding(f"no embedding for token {exc.args[0]!r}") from None


def bert_score(
    cand_vecs: Sequence[Sequence[float]], ref_vecs: Sequence[Sequence[float]]
) -> PRF:
    """Greedy cosine matching over unit token vectors: precision averages
    each candidate token's best match against the reference, recall the
    symmetric direction. Similarities are floored at 0 so scores stay in
    [0, 1]. No baseline rescaling."""
    if not cand_vecs or not ref_vecs:
        return ZERO_PRF
    dims = {len(v) for v in list(cand_vecs) + list(ref_vecs)}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed embedding dimensions: {sorted(dims)}")

    def best(vec, others):
        return max(max(0.0, sum(a * b for a, b in zip(vec, o))) for o in others)

    p = sum(best(v, ref_vecs) for v in cand_vecs) / len(cand_vecs)
    r = sum(best(v, cand_vecs) for v in ref_vecs) / len(ref_vecs)
    return PRF.from_pr(p, r)


# --- Run-level aggregation ---------------------------------------------------


@dataclass(frozen=True)
class PairScores:
    rouge2: PRF
    rouge_l: PRF
    meteor: float
    chrf: float
    bleu: float
    bertscore: PRF | None = None

    def as_dict(self) -> dict:
        return {
            "rouge2": self.rouge2.as_dict(),
            "rougeL": self.rouge_l.as_dict(),
            "meteor": self.meteor,
            "chrf": self.chrf,
            "bleu": self.bleu,
            "bertscore": self.bertscore.as_dict() if self.bertscore else None,
        }


@dataclass(frozen=True)
class ScoreReport:
    run_id: str
    model_id: str
    setting: str
    per_pair: dict[str, PairScores]
    corpus_means: PairScores
    scored: int
    failed: int

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model_id": self.model_id,
            "setting": self.setting,
            "scored": self.scored,
            "failed": self.failed,
            "corpus_means": self.corpus_means.as_dict(),
            "per_pair": {rid: ps.as_dict() for rid, ps in sorted(self.per_pair.items())},
        }


def score_pair(
    candidate_text: str,
    reference_text: str,
    embeddings: EmbeddingProvider | None = None,
) -> PairScores:
    cand = tokenize(candidate_text)
    ref = tokenize(reference_text)
    bert = None
    if embeddings is not None:
        bert = bert_score(embeddings.vectors(cand), embeddings.vectors(ref))
    return PairScores(
        rouge2=rouge_n(cand, ref, 2),
        rouge_l=rouge_l(cand, ref),
        meteor=meteor(cand, ref),
        chrf=chrf(candidate_text, reference_text),
        bleu=bleu(cand, ref),
        bertscore=bert,
    )


def _mean_prf(values: list[PRF]) -> PRF:
    # fsum: exact accumulation, so means are permutation invariant
    n = len(values)
    return PRF(
        math.fsum(v.precision for v in values) / n,
        math.fsum(v.recall for v in values) / n,
        math.fsum(v.f1 for v in values) / n,
    )


def evaluate_run(
    run: "GenerationRun",
    gold: Mapping[str, str],
    embeddings: EmbeddingProvider | None = None,
) -> ScoreReport:
    """Score every Ok result in a run against the gold questions. Failed
    results are excluded from the means but counted, so transport errors do
    not masquerade as model quality."""
    per_pair: dict[str, PairScores] = {}
    failed = 0
    for result in run.results:
        if not result.is_ok:
            failed += 1
            continue
        if result.record_id not in gold:
            raise MissingGold(f"no gold question for record {result.record_id!r}")
        per_pair[result.record_id] = score_pair(
            result.output_question, gold[result.record_id], embeddings
        )
    if not per_pair:
        raise NoScorablePairs(f"run {run.run_id!r} has no Ok results to score")

    scores = list(per_pair.values())
    n = len(scores)
    means = PairScores(
        rouge2=_mean_prf([s.rouge2 for s in scores]),
        rouge_l=_mean_prf([s.rouge_l for s in scores]),
        meteor=math.fsum(s.meteor for s in scores) / n,
        chrf=math.fsum(s.chrf for s in scores) / n,
        bleu=math.fsum(s.bleu for s in scores) / n,
        bertscore=(
            _mean_prf([s.bertscore for s in scores])
            if all(s.bertscore is not None for s in scores)
            else None
        ),
    )
    return ScoreReport(
        run_id=run.run_id,
        model_id=run.model_id,
        setting=str(getattr(run.setting, "value", run.setting)),
        per_pair=per_pair,
        corpus_means=means,
        scored=n,
        failed=failed,
    )


# Rendered tables show CHrF and BLEU as percentages; storage stays in [0, 1].
CSV_COLUMNS = (
    "rouge2_precision", "rouge2_recall", "rouge2_f1",
    "rougeL_precision", "rougeL_recall", "rougeL_f1",
    "meteor", "chrf_pct", "bleu_pct", "bertscore_f1",
)


def _csv_fields(scores: PairScores) -> list[str]:
    vals = [
        scores.rouge2.precision, scores.rouge2.recall, scores.rouge2.f1,
        scores.rouge_l.precision, scores.rouge_l.recall, scores.rouge_l.f1,
        scores.meteor, scores.chrf * 100.0, scores.bleu * 100.0,
    ]
    out = [f"{v:.6f}" for v in vals]
    out.append(f"{scores.bertscore.f1:.6f}" if scores.bertscore else "")
    return out


def report_to_csv(report: ScoreReport) -> str:
    """Per-pair rows plus a MEAN footer, columns in the standard table order."""
    lines = ["record_id," + ",".join(CSV_COLUMNS)]
    for rid in sorted(report.per_pair):
        lines.append(",".join([rid] + _csv_fields(report.per_pair[rid])))
    lines.append(",".join(["MEAN"] + _csv_fields(report.corpus_means)))
    return "\n".join(lines) + "\n"

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgbench import generation
from qgbench._porter import porter_stem
from qgbench.metrics import (
    PRF,
    DimensionMismatch,
    HashedBasisEmbeddings,
    MissingGold,
    NoScorablePairs,
    ZERO_PRF,
    bert_score,
    bleu,
    chrf,
    corpus_bleu,
    evaluate_run,
    lcs_length,
    meteor,
    report_to_csv,
    rouge_l,
    rouge_n,
    score_pair,
    tokenize,
)
from qgbench.prompts import PromptSetting

import oracles

TOKENS = st.lists(st.sampled_from(["a", "b", "c", "river", "trade", "the"]), max_size=8)
NONEMPTY = st.lists(
    st.sampled_from(["a", "b", "c", "river", "trade", "the"]), min_size=1, max_size=8
)


class TestTokenize:
    def test_question(self):
        assert tokenize("What does purchasing power parity do?") == [
            "what", "does", "purchasing", "power", "parity", "do",
        ]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_stripped(self):
        assert tokenize("PPP, PPP!") == ["ppp", "ppp"]

    def test_no_empty_tokens(self):
        assert tokenize("-- ?! ...") == []


class TestRougeN:
    def test_identity(self):
        seq = ["a", "b", "c", "d", "e"]
        assert rouge_n(seq, seq, 2) == PRF(1.0, 1.0, 1.0)

    def test_hand_derived_bigrams(self):
        # bigram sets {ab, bc} vs {ab, bd}: overlap 1
        got = rouge_n(["a", "b", "c"], ["a", "b", "d"], 2)
        assert got == PRF(0.5, 0.5, 0.5)

    def test_empty_candidate(self):
        assert rouge_n([], ["a", "b"], 2) == ZERO_PRF

    def test_clipping(self):
        # candidate repeats a bigram the reference has once
        got = rouge_n(["a", "b", "a", "b"], ["a", "b"], 2)
        assert got.precision == pytest.approx(1 / 3)
        assert got.recall == 1.0

    @given(a=TOKENS, b=TOKENS, n=st.integers(1, 3))
    def test_duality(self, a, b, n):
        assert rouge_n(a, b, n).precision == rouge_n(b, a, n).recall

    @given(a=TOKENS, b=TOKENS)
    def test_matches_oracle(self, a, b):
        got = rouge_n(a, b, 2)
        want = oracles.rouge_n_oracle(a, b, 2)
        assert (got.precision, got.recall, got.f1) == pytest.approx(want, abs=1e-12)

    @given(base=TOKENS, ref=st.lists(st.sampled_from(["a", "b", "c"]), min_size=2, max_size=6))
    def test_recall_monotone_under_new_matching_bigram(self, base, ref):
        first, second = ref[0], ref[1]
        cand = base + [first]
        before = rouge_n(cand, ref, 2).recall
        after = rouge_n(cand + [second], ref, 2).recall
        assert after >= before


class TestRougeL:
    def test_hand_derived(self):
        got = rouge_l(["a", "b", "c", "d"], ["a", "c", "b", "d"])
        assert got == PRF(0.75, 0.75, 0.75)

    def test_identity(self):
        seq = ["x", "y", "z"]
        assert rouge_l(seq, seq) == PRF(1.0, 1.0, 1.0)

    def test_disjoint(self):
        assert rouge_l(["a", "b"], ["c", "d"]) == ZERO_PRF

    @given(a=TOKENS, b=TOKENS)
    def test_duality(self, a, b):
        assert rouge_l(a, b).precision == rouge_l(b, a).recall

    @given(a=TOKENS, b=TOKENS)
    def test_lcs_matches_exhaustive_oracle(self, a, b):
        assert lcs_length(a, b) == oracles.lcs_len_oracle(a, b)

    @given(a=TOKENS, b=TOKENS)
    def test_lcs_bounded(self, a, b):
        assert lcs_length(a, b) <= min(len(a), len(b))


class TestMeteor:
    def test_identity_four_tokens(self):
        seq = ["w", "x", "y", "z"]
        assert meteor(seq, seq) == pytest.approx(0.9921875, abs=1e-12)

    def test_no_matches(self):
        assert meteor(["a", "b"], ["c", "d"]) == 0.0

    def test_identity_single_token(self):
        assert meteor(["x"], ["x"]) == pytest.approx(0.5, abs=1e-12)

    def test_two_of_three_contiguous(self):
        # m=2, P=R=2/3, F=2/3, chunks=1, penalty=0.5*(1/2)^3
        got = meteor(["the", "cat", "sat"], ["the", "cat", "mat"])
        assert got == pytest.approx(0.625, abs=1e-12)

    def test_stem_stage_match(self):
        assert porter_stem("running") == porter_stem("runs")
        assert meteor(["running"], ["runs"]) == pytest.approx(0.5, abs=1e-12)

    def test_block_swap_minimizes_chunks(self):
        cand = "the cat sat on the mat".split()
        ref = "on the mat the cat sat".split()
        # two contiguous blocks: penalty = 0.5 * (2/6)^3
        assert meteor(cand, ref) == pytest.approx(53 / 54, abs=1e-12)

    @given(seq=NONEMPTY)
    def test_identity_formula(self, seq):
        want = 1.0 - 0.5 / len(seq) ** 3
        assert meteor(seq, seq) == pytest.approx(want, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        a=st.lists(st.sampled_from(["run", "runs", "cat", "cats", "the", "mat"]), min_size=1, max_size=5),
        b=st.lists(st.sampled_from(["run", "runs", "cat", "cats", "the", "mat"]), min_size=1, max_size=5),
    )
    def test_matches_dfs_oracle(self, a, b):
        got = meteor(a, b)
        want = oracles.meteor_oracle(a, b, porter_stem)
        assert got == pytest.approx(want, abs=1e-9)


class TestChrf:
    def test_identity(self):
        assert chrf("hello there", "hello there") == pytest.approx(1.0)

    def test_disjoint_characters(self):
        assert chrf("aaa", "zzz") == 0.0

    def test_hand_derived_small(self):
        # P = 1, R = (2/3 + 1/2) / 2 = 7/12, F2 = 5PR / (4P + R) = 7/11
        assert chrf("ab", "abc", max_n=2) == pytest.approx(7 / 11, abs=1e-12)

    def test_empty_reference(self):
        assert chrf("abc", "") == 0.0

    @given(a=TOKENS, b=TOKENS)
    def test_matches_oracle(self, a, b):
        got = chrf(" ".join(a), " ".join(b))
        want = oracles.chrf_oracle(" ".join(a), " ".join(b))
        assert got == pytest.approx(want, abs=1e-12)


class TestBleu:
    def test_identity_long(self):
        seq = ["a", "b", "c", "d", "e"]
        assert bleu(seq, seq) == pytest.approx(1.0)

    def test_identity_short_sequences_skip_missing_orders(self):
        assert bleu(["a", "b"], ["a", "b"]) == pytest.approx(1.0)

    def test_brevity_penalty(self):
        got = bleu(["a"], ["a", "b", "c"])
        assert got <= math.exp(-2) + 1e-12
        assert got == pytest.approx(math.exp(-2), abs=1e-12)

    def test_disjoint_smoothed_floor(self):
        assert bleu(["a", "b", "c"], ["x", "y", "z"]) <= 1e-6

    def test_empty_candidate(self):
        assert bleu([], ["a"]) == 0.0

    @given(a=TOKENS, b=TOKENS)
    def test_matches_oracle(self, a, b):
        assert bleu(a, b) == pytest.approx(oracles.bleu_oracle(a, b), abs=1e-12)

    def test_corpus_bleu_pools_counts(self):
        pairs = [(["a", "b"], ["a", "b"]), (["c"], ["c", "d"])]
        got = corpus_bleu(pairs)
        # pooled: 1-grams 3/3, 2-grams 1/1; BP = exp(1 - 4/3)
        assert got == pytest.approx(math.exp(1 - 4 / 3), abs=1e-12)


def _basis(i, dim=4):
    v = [0.0] * dim
    v[i] = 1.0
    return v


class TestBertScore:
    def test_identical_sets(self):
        vecs = [_basis(0), _basis(1)]
        assert bert_score(vecs, vecs) == PRF(1.0, 1.0, 1.0)

    def test_orthogonal(self):
        assert bert_score([_basis(0)], [_basis(1)]) == ZERO_PRF

    def test_hand_derived_subset(self):
        got = bert_score([_basis(0)], [_basis(0), _basis(1)])
        assert got.precision == 1.0
        assert got.recall == 0.5
        assert got.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            bert_score([_basis(0, 4)], [_basis(0, 5)])

    def test_empty_side(self):
        assert bert_score([], [_basis(0)]) == ZERO_PRF

    def test_hashed_provider_identity(self):
        provider = HashedBasisEmbeddings(dim=512)
        tokens = ["what", "does", "parity", "do"]
        assert bert_score(provider.vectors(tokens), provider.vectors(tokens)) == PRF(1.0, 1.0, 1.0)


class TestBounds:
    @given(a=TOKENS, b=TOKENS)
    def test_all_metrics_in_unit_interval(self, a, b):
        for prf in (rouge_n(a, b, 2), rouge_l(a, b)):
            for v in (prf.precision, prf.recall, prf.f1):
                assert 0.0 <= v <= 1.0
        assert 0.0 <= meteor(a, b) <= 1.0
        assert 0.0 <= bleu(a, b) <= 1.0
        assert 0.0 <= chrf(" ".join(a), " ".join(b)) <= 1.0


def _mock_run(records, setting=PromptSetting.WITH_LONG_PROMPT):
    return generation.run_batch(
        generation.MockEchoAdapter(), records, setting, generation.GenParams(),
        run_id="test-run",
    )


class TestEvaluateRun:
    def test_single_pair_means_equal_pair(self, small_corpus):
        run = _mock_run(small_corpus[:1])
        gold = {r.id: r.question for r in small_corpus}
        report = evaluate_run(run, gold)
        assert report.scored == 1 and report.failed == 0
        only = next(iter(report.per_pair.values()))
        assert report.corpus_means == only

    def test_no_ok_results_raises(self, small_corpus):
        adapter = generation.FlakyAdapter(
            generation.MockEchoAdapter(), fail_on=set(range(50))
        )
        run = generation.run_batch(
            adapter, small_corpus[:2], PromptSetting.WITHOUT_PROMPT,
            generation.GenParams(), retry=generation.RetryPolicy(sleep=lambda s: None),
        )
        gold = {r.id: r.question for r in small_corpus}
        with pytest.raises(NoScorablePairs):
            evaluate_run(run, gold)

    def test_missing_gold_raises(self, small_corpus):
        run = _mock_run(small_corpus[:1])
        with pytest.raises(MissingGold):
            evaluate_run(run, {})

    def test_matches_scripted_oracle_on_fixture(self, replica_records):
        records = replica_records[:10]
        run = _mock_run(records)
        gold = {r.id: r.question for r in records}
        report = evaluate_run(run, gold)
        assert report.scored == 10

        sums = {"r2p": 0.0, "r2r": 0.0, "r2f": 0.0, "rlp": 0.0, "rlr": 0.0,
                "rlf": 0.0, "meteor": 0.0, "chrf": 0.0, "bleu": 0.0}
        for result in run.results:
            cand_text, ref_text = result.output_question, gold[result.record_id]
            cand, ref = tokenize(cand_text), tokenize(ref_text)
            got = report.per_pair[result.record_id]
            r2 = oracles.rouge_n_oracle(cand, ref, 2)
            rl = oracles.rouge_l_oracle(cand, ref)
            met = oracles.meteor_oracle(cand, ref, porter_stem)
            ch = oracles.chrf_oracle(cand_text, ref_text)
            bl = oracles.bleu_oracle(cand, ref)
            assert (got.rouge2.precision, got.rouge2.recall, got.rouge2.f1) == pytest.approx(r2, abs=1e-9)
            assert (got.rouge_l.precision, got.rouge_l.recall, got.rouge_l.f1) == pytest.approx(rl, abs=1e-9)
            assert got.meteor == pytest.approx(met, abs=1e-9)
            assert got.chrf == pytest.approx(ch, abs=1e-9)
            assert got.bleu == pytest.approx(bl, abs=1e-9)
            sums["r2p"] += r2[0]; sums["r2r"] += r2[1]; sums["r2f"] += r2[2]
            sums["rlp"] += rl[0]; sums["rlr"] += rl[1]; sums["rlf"] += rl[2]
            sums["meteor"] += met; sums["chrf"] += ch; sums["bleu"] += bl

        means = report.corpus_means
        n = len(records)
        assert means.rouge2.precision == pytest.approx(sums["r2p"] / n, abs=1e-9)
        assert means.rouge_l.f1 == pytest.approx(sums["rlf"] / n, abs=1e-9)
        assert means.meteor == pytest.approx(sums["meteor"] / n, abs=1e-9)
        assert means.chrf == pytest.approx(sums["chrf"] / n, abs=1e-9)
        assert means.bleu == pytest.approx(sums["bleu"] / n, abs=1e-9)
        assert means.bertscore is None

    def test_bertscore_column_present_with_provider(self, small_corpus):
        run = _mock_run(small_corpus[:2])
        gold = {r.id: r.question for r in small_corpus}
        report = evaluate_run(run, gold, HashedBasisEmbeddings(dim=256))
        assert report.corpus_means.bertscore is not None
        for pair in report.per_pair.values():
            assert pair.bertscore is not None

    def test_means_permutation_invariant(self, small_corpus):
        run = _mock_run(small_corpus)
        gold = {r.id: r.question for r in small_corpus}
        report = evaluate_run(run, gold)
        shuffled = generation.GenerationRun(
            run_id=run.run_id, model_id=run.model_id, setting=run.setting,
            params=run.params, results=tuple(reversed(run.results)),
            created_at=run.created_at,
        )
        report2 = evaluate_run(shuffled, gold)
        assert report.corpus_means == report2.corpus_means

    def test_csv_shape(self, small_corpus):
        run = _mock_run(small_corpus[:3])
        gold = {r.id: r.question for r in small_corpus}
        csv = report_to_csv(evaluate_run(run, gold))
        lines = csv.strip().split("\n")
        assert lines[0].startswith("record_id,rouge2_precision")
        assert len(lines) == 1 + 3 + 1
        assert lines[-1].startswith("MEAN,")


class TestScorePair:
    def test_identical_texts(self):
        pair = score_pair("What is trade?", "What is trade?")
        assert pair.rouge_l == PRF(1.0, 1.0, 1.0)
        assert pair.chrf == pytest.approx(1.0)
        assert pair.bleu == pytest.approx(1.0)


def test_random_pairs_match_oracles_everywhere():
    rng = random.Random(7)
    vocab = ["a", "b", "c", "trade", "river", "the", "of"]
    for _ in range(300):
        a = [rng.choice(vocab) for _ in range(rng.randint(0, 8))]
        b = [rng.choice(vocab) for _ in range(rng.randint(0, 8))]
        assert rouge_n(a, b, 2).f1 == pytest.approx(oracles.rouge_n_oracle(a, b, 2)[2], abs=1e-12)
        assert rouge_l(a, b).f1 == pytest.approx(oracles.rouge_l_oracle(a, b)[2], abs=1e-12)
        assert bleu(a, b) == pytest.approx(oracles.bleu_oracle(a, b), abs=1e-12)
        assert chrf(" ".join(a), " ".join(b)) == pytest.approx(
            oracles.chrf_oracle(" ".join(a), " ".join(b)), abs=1e-12
        )

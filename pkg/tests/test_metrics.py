"""Metric hand values and invariants."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphsum.errors import ContractError
from graphsum.metrics import bleu4, meteor, meteor_sample, rouge_l, rouge_l_sample

WORDS = st.lists(st.sampled_from(["the", "cat", "sat", "mat", "dog", "ran"]),
                 min_size=0, max_size=8)


class TestBleu:
    def test_identical_is_one(self):
        sent = "returns the sum of two values".split()
        assert bleu4([sent], [sent]) == pytest.approx(1.0)

    def test_short_exact_prefix_pays_brevity_penalty(self):
        # all precisions are 1 after smoothing; only exp(1 - 4/3) remains
        got = bleu4([["the", "cat", "sat"]], [["the", "cat", "sat", "down"]])
        assert got == pytest.approx(math.exp(-1.0 / 3.0), abs=1e-12)

    def test_no_unigram_overlap_is_zero(self):
        assert bleu4([["alpha", "beta"]], [["gamma", "delta"]]) == 0.0

    def test_empty_candidate_is_zero(self):
        assert bleu4([[]], [["a", "b"]]) == 0.0

    def test_unigram_clipping(self):
        # "the" appears once in the reference: 1 clipped match out of 4,
        # zero higher-order matches, candidate longer than reference
        got = bleu4([["the"] * 4], [["the", "cat"]])
        expected = (0.25 * (1 / 4) * (1 / 3) * (1 / 2)) ** 0.25
        assert got == pytest.approx(expected, abs=1e-12)

    def test_corpus_pools_counts_not_scores(self):
        cands = [["a", "b"], ["c", "d", "e", "f"]]
        refs = [["a", "b"], ["x", "y", "z", "w"]]
        pooled = bleu4(cands, refs)
        averaged = (bleu4(cands[:1], refs[:1]) + bleu4(cands[1:], refs[1:])) / 2
        assert pooled != pytest.approx(averaged)
        # pooled counts: 2/6 unigrams, then smoothed (1+1)/(4+1), (0+1)/(2+1),
        # (0+1)/(1+1); lengths tie at 6 so no brevity penalty
        expected = ((2 / 6) * (2 / 5) * (1 / 3) * (1 / 2)) ** 0.25
        assert pooled == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            bleu4([["a"]], [])

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(WORDS, WORDS), min_size=1, max_size=4))
    def test_bounded(self, pairs):
        cands = [c for c, _ in pairs]
        refs = [r for _, r in pairs]
        assert 0.0 <= bleu4(cands, refs) <= 1.0 + 1e-12


class TestRougeL:
    def test_identical_is_one(self):
        sent = ["a", "b", "c"]
        assert rouge_l_sample(sent, sent) == pytest.approx(1.0)

    def test_hand_value_subsequence(self):
        # LCS 4, R = 2/3, P = 1: (1 + 1.44) * (2/3) / (2/3 + 1.44) = 4.88/6.32
        got = rouge_l_sample(["the", "cat", "on", "mat"],
                             ["the", "cat", "sat", "on", "the", "mat"])
        assert got == pytest.approx(4.88 / 6.32, abs=1e-12)

    def test_equal_precision_recall_collapses_to_recall(self):
        got = rouge_l_sample(["police", "kill", "the", "gunman"],
                             ["police", "killed", "the", "gunman"])
        assert got == pytest.approx(0.75, abs=1e-12)

    def test_disjoint_is_zero(self):
        assert rouge_l_sample(["a"], ["b"]) == 0.0
        assert rouge_l_sample([], ["b"]) == 0.0
        assert rouge_l_sample(["a"], []) == 0.0

    def test_order_matters(self):
        # reversal leaves only a length-1 common subsequence
        fwd = rouge_l_sample(["a", "b", "c"], ["a", "b", "c"])
        rev = rouge_l_sample(["c", "b", "a"], ["a", "b", "c"])
        assert fwd == pytest.approx(1.0) and rev < 0.5

    def test_corpus_is_sample_mean(self):
        cands = [["a", "b"], ["c"]]
        refs = [["a", "b"], ["d"]]
        expected = (rouge_l_sample(cands[0], refs[0]) + rouge_l_sample(cands[1], refs[1])) / 2
        assert rouge_l(cands, refs) == pytest.approx(expected)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            rouge_l([], [["a"]])

    @settings(max_examples=80, deadline=None)
    @given(WORDS, WORDS)
    def test_bounded_and_symmetric_in_trivial_cases(self, a, b):
        s = rouge_l_sample(a, b)
        assert 0.0 <= s <= 1.0 + 1e-12


class TestMeteor:
    def test_identical_pays_single_chunk_penalty(self):
        got = meteor_sample(["a", "b", "c"], ["a", "b", "c"])
        assert got == pytest.approx(1.0 - 0.5 / 27, abs=1e-12)

    def test_fully_scattered_matches_pay_half(self):
        # every match is its own chunk: penalty = 0.5, F = 1
        got = meteor_sample(["a", "b", "c"], ["c", "b", "a"])
        assert got == pytest.approx(0.5, abs=1e-12)

    def test_hand_value_partial_match(self):
        # cand "the cat sat" vs ref "the cat": matches 2 in one chunk,
        # P = 2/3, R = 1, F = 10PR/(R+9P) = (20/3)/7, penalty = 0.5/8
        got = meteor_sample(["the", "cat", "sat"], ["the", "cat"])
        assert got == pytest.approx((20 / 3) / 7 * (1 - 0.0625), abs=1e-12)

    def test_no_match_is_zero(self):
        assert meteor_sample(["a"], ["b"]) == 0.0
        assert meteor_sample([], ["b"]) == 0.0
        assert meteor_sample(["a"], []) == 0.0

    def test_alignment_prefers_run_continuation(self):
        # "b" could take ref position 0 but continuing after "a" keeps one chunk
        matches, chunks = __import__("graphsum.metrics", fromlist=["x"])._meteor_align(
            ["a", "b"], ["b", "a", "b"])
        assert matches == 2 and chunks == 1

    def test_duplicate_tokens_use_each_position_once(self):
        got = meteor_sample(["a", "a", "a"], ["a"])
        # one match, P = 1/3, R = 1, one chunk
        fscore = 10 * (1 / 3) * 1 / (1 + 9 * (1 / 3))
        assert got == pytest.approx(fscore * (1 - 0.5), abs=1e-12)

    def test_corpus_is_sample_mean(self):
        cands = [["a", "b"], ["c"]]
        refs = [["b", "a"], ["c"]]
        expected = (meteor_sample(cands[0], refs[0]) + meteor_sample(cands[1], refs[1])) / 2
        assert meteor(cands, refs) == pytest.approx(expected)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            meteor([["a"]], [["a"], ["b"]])

    @settings(max_examples=80, deadline=None)
    @given(WORDS, WORDS)
    def test_bounded(self, a, b):
        assert 0.0 <= meteor_sample(a, b) <= 1.0 + 1e-12

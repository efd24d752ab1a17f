"""Retrieval backends: bag building, similarity math, top-1 selection."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphsum.errors import DataError, RetrievalError
from graphsum.retrieval import (
    CorpusEntry,
    bow_vector,
    corpus_features,
    cosine_similarity,
    edit_distance_similarity,
    load_corpus,
    retrieve_top1,
    save_corpus,
    token_texts,
)


class TestBowVector:
    def test_identifiers_split_keywords_and_numbers_kept(self):
        bag = bow_vector("int sendAll(char *buf) { return buf[0] + 10; }")
        assert bag["send"] == 1 and bag["all"] == 1
        assert bag["int"] == 1 and bag["return"] == 1
        assert bag["10"] == 1 and bag["0"] == 1
        assert bag["buf"] == 2

    def test_operators_strings_punctuation_dropped(self):
        bag = bow_vector('void f() { s = "text message"; }')
        assert "+" not in bag and ";" not in bag
        assert not any("text" in k for k in bag)

    def test_counts_accumulate(self):
        bag = bow_vector("int f(int n) { return n + n + n; }")
        assert bag["n"] == 4


class TestCosine:
    def test_identical_bags_score_one(self):
        u = {"a": 2, "b": 1}
        assert cosine_similarity(u, dict(u)) == pytest.approx(1.0)

    def test_orthogonal_bags_score_zero(self):
        assert cosine_similarity({"a": 1}, {"b": 3}) == 0.0

    def test_empty_bag_scores_zero(self):
        assert cosine_similarity({}, {"a": 1}) == 0.0
        assert cosine_similarity({}, {}) == 0.0

    def test_hand_value(self):
        # u=(1,1), v=(1,0) over words {a,b}: 1/sqrt(2)
        assert cosine_similarity({"a": 1, "b": 1}, {"a": 1}) == pytest.approx(2 ** -0.5)


class TestEditSimilarity:
    def test_identical_tokens(self):
        assert edit_distance_similarity(["a", "b"], ["a", "b"]) == 1.0

    def test_both_empty(self):
        assert edit_distance_similarity([], []) == 1.0

    def test_disjoint(self):
        assert edit_distance_similarity(["a"], ["b", "c"]) == 0.0

    def test_hand_value(self):
        # one substitution over max length 3
        got = edit_distance_similarity(["x", "y", "z"], ["x", "q", "z"])
        assert got == pytest.approx(1 - 1 / 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from("abc"), max_size=8),
           st.lists(st.sampled_from("abc"), max_size=8))
    def test_bounds_and_symmetry(self, a, b):
        s = edit_distance_similarity(a, b)
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(edit_distance_similarity(b, a))


def _db():
    return [
        CorpusEntry(0, "int add(int a, int b) { return a + b; }", "add"),
        CorpusEntry(1, "int sub(int a, int b) { return a - b; }", "sub"),
        CorpusEntry(2, "void reset(int *p) { p[0] = 0; }", "reset"),
    ]


class TestRetrieveTop1:
    def test_self_is_excluded(self):
        db = _db()
        hit = retrieve_top1(db, db[0], "edit")
        assert hit.entry.id != 0

    def test_eval_query_sentinel_never_matches(self):
        db = _db()
        hit = retrieve_top1(db, CorpusEntry(-1, db[0].code, ""), "cosine")
        assert hit.entry.id == 0 and hit.score == pytest.approx(1.0)

    def test_tie_breaks_to_lowest_id(self):
        code = "int f(int x) { return x; }"
        db = [CorpusEntry(9, code, "a"), CorpusEntry(4, code, "b")]
        hit = retrieve_top1(db, CorpusEntry(-1, code, ""), "cosine")
        assert hit.entry.id == 4

    def test_no_candidates_raises(self):
        db = [_db()[0]]
        with pytest.raises(RetrievalError):
            retrieve_top1(db, db[0], "cosine")

    def test_unknown_backend_rejected(self):
        with pytest.raises(RetrievalError):
            retrieve_top1(_db(), CorpusEntry(-1, "int f() { }", ""), "jaccard")

    def test_precomputed_features_match_fresh_scan(self):
        db = _db()
        q = CorpusEntry(-1, "int mul(int a, int b) { return a * b; }", "")
        for backend in ("cosine", "edit"):
            feats = corpus_features(db, backend)
            a = retrieve_top1(db, q, backend, features=feats)
            b = retrieve_top1(db, q, backend)
            assert (a.entry.id, a.score) == (b.entry.id, b.score)

    def test_edit_backend_uses_raw_token_stream(self):
        assert token_texts("a+++b") == ["a", "++", "+", "b"]


class TestCorpusIO:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "c.jsonl")
        save_corpus(path, _db())
        assert load_corpus(path) == _db()

    def test_blank_lines_tolerated(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": 1, "code": "int f() { }", "summary": "s"}\n\n')
        assert len(load_corpus(str(path))) == 1

    @pytest.mark.parametrize("line", [
        "not json at all",
        '["a", "list"]',
        '{"code": "x", "summary": "s"}',
        '{"id": "1", "code": "x", "summary": "s"}',
        '{"id": 1, "code": 2, "summary": "s"}',
        '{"id": true, "code": "x", "summary": "s"}',
    ])
    def test_malformed_lines_rejected(self, tmp_path, line):
        path = tmp_path / "bad.jsonl"
        path.write_text(line + "\n")
        with pytest.raises(DataError):
            load_corpus(str(path))

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        rec = '{"id": 7, "code": "int f() { }", "summary": "s"}\n'
        path.write_text(rec + rec)
        with pytest.raises(DataError):
            load_corpus(str(path))

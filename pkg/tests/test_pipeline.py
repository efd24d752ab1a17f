"""Corpus prep, training loop behavior, checkpoints, evaluation, single-shot use."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from conftest import toy_entries
from graphsum.config import Config
from graphsum.errors import DataError
from graphsum.pipeline import (
    QUERY_ID,
    Model,
    RetrievalState,
    build_vocabs,
    evaluate_model,
    load_checkpoint,
    prepare_corpus,
    retrieve_for,
    save_checkpoint,
    summarize_one,
    summary_to_words,
    train,
)
from graphsum.retrieval import CorpusEntry
from graphsum.tensor import load_archive, save_archive

BROKEN = "int f( { return 1; }"


def _prepared(count=None):
    entries = toy_entries()
    samples, skipped = prepare_corpus(entries if count is None else entries[:count])
    assert not skipped
    return samples


class TestSummaryWords:
    def test_lowercase_whitespace_split(self):
        assert summary_to_words("Adds  Two\tNumbers") == ["adds", "two", "numbers"]
        assert summary_to_words("") == []


class TestPrepareCorpus:
    def test_keeps_parseable_in_order(self):
        samples, skipped = prepare_corpus(toy_entries())
        assert [s.id for s in samples] == [e.id for e in toy_entries()]
        assert skipped == []
        assert all(s.graph.node_count > 2 for s in samples)

    def test_skips_unparseable_under_threshold(self):
        entries = toy_entries()
        entries[3] = CorpusEntry(entries[3].id, BROKEN, "broken")
        samples, skipped = prepare_corpus(entries)
        assert skipped == [entries[3].id]
        assert len(samples) == len(entries) - 1

    def test_aborts_when_too_many_fail(self):
        entries = toy_entries()[:4]
        bad = [CorpusEntry(100 + i, BROKEN, "nope") for i in range(2)]
        with pytest.raises(DataError):
            prepare_corpus(entries + bad)

    def test_exact_threshold_tolerated(self):
        entries = toy_entries()[:4]
        entries.append(CorpusEntry(100, BROKEN, "nope"))
        samples, skipped = prepare_corpus(entries)
        assert len(skipped) == 1 and len(samples) == 4

    def test_empty_input(self):
        assert prepare_corpus([]) == ([], [])


class TestVocabBuilding:
    def test_code_vocab_holds_subtokens(self, tiny_config):
        samples = _prepared()
        code_vocab, summary_vocab = build_vocabs(samples, tiny_config)
        assert "int" in code_vocab.index
        assert "return" in code_vocab.index
        for word in ("add", "the", "value"):
            assert word in summary_vocab.index


class TestRetrieveFor:
    def test_disabled_augmentation(self, tiny_config):
        samples = _prepared()
        state = RetrievalState.build(samples, "cosine")
        cfg = dataclasses.replace(tiny_config, use_augment=False)
        assert retrieve_for(state, samples[0].code, QUERY_ID, cfg) == (None, None)

    def test_no_candidate_besides_self(self, tiny_config):
        samples = _prepared(1)
        state = RetrievalState.build(samples, "cosine")
        ctx, entry = retrieve_for(state, samples[0].code, samples[0].id, tiny_config)
        assert ctx is None and entry is None

    def test_context_carries_score_and_words(self, tiny_config):
        samples = _prepared()
        state = RetrievalState.build(samples, "cosine")
        ctx, entry = retrieve_for(state, samples[0].code, QUERY_ID, tiny_config)
        assert entry is not None and 0.0 <= ctx.z <= 1.0
        assert ctx.summary_words == summary_to_words(entry.summary)

    def test_graphs_reused_from_samples(self, tiny_config):
        samples = _prepared()
        state = RetrievalState.build(samples, "cosine")
        assert state.graph_for(state.db[2]) is samples[2].graph

    def test_graph_for_parses_missing_entries(self):
        state = RetrievalState("cosine", [], {})
        entry = CorpusEntry(5, "int f() { return 1; }", "one")
        graph = state.graph_for(entry)
        assert graph.node_count > 2
        assert state.graph_for(entry) is graph


class TestTrain:
    def test_deterministic_across_runs(self, tiny_config):
        samples = _prepared(6)
        cfg = dataclasses.replace(tiny_config, epochs=2)
        a = train(samples, None, cfg)
        b = train(samples, None, cfg)
        for name, t in a.model.named_tensors().items():
            np.testing.assert_array_equal(t.data, b.model.named_tensors()[name].data)
        assert [s.loss for s in a.stats] == [s.loss for s in b.stats]

    def test_loss_drops_on_tiny_corpus(self, tiny_config):
        samples = _prepared(4)
        cfg = dataclasses.replace(tiny_config, epochs=8, batch_size=2)
        result = train(samples, None, cfg)
        assert result.stats[-1].loss < result.stats[0].loss

    def test_target_loss_stops_immediately_when_met(self, tiny_config):
        samples = _prepared(4)
        result = train(samples, None, tiny_config, target_loss=1e9)
        assert len(result.stats) == 1

    def test_validation_bleu_tracked_and_best_restored(self, tiny_config):
        samples = _prepared(6)
        cfg = dataclasses.replace(tiny_config, epochs=3)
        result = train(samples[:4], samples[4:], cfg)
        scores = [s.val_bleu for s in result.stats]
        assert all(v is not None for v in scores)
        first_best = scores.index(max(scores))
        assert result.epoch == result.stats[first_best].epoch

    def test_patience_zero_runs_every_epoch(self, tiny_config):
        samples = _prepared(6)
        cfg = dataclasses.replace(tiny_config, epochs=3)
        result = train(samples[:4], samples[4:], cfg, patience=0)
        assert len(result.stats) == 3
        assert result.epoch == 2

    def test_patience_one_stops_after_one_stale_epoch(self, tiny_config):
        samples = _prepared(6)
        cfg = dataclasses.replace(tiny_config, epochs=12)
        result = train(samples[:4], samples[4:], cfg, patience=1)
        scores = [s.val_bleu for s in result.stats]
        if len(result.stats) < cfg.epochs:
            assert scores[-1] <= max(scores[:-1])

    def test_teacher_rate_follows_schedule(self, tiny_config):
        samples = _prepared(4)
        cfg = dataclasses.replace(tiny_config, epochs=4, sched_floor=0.5)
        result = train(samples, None, cfg)
        assert [s.teacher_rate for s in result.stats] == [1.0, 0.75, 0.5, 0.5]

    def test_empty_corpus_rejected(self, tiny_config):
        with pytest.raises(DataError):
            train([], None, tiny_config)

    def test_emit_callback_sees_every_epoch(self, tiny_config):
        samples = _prepared(4)
        cfg = dataclasses.replace(tiny_config, epochs=2)
        seen = []
        train(samples, None, cfg, emit=lambda s: seen.append(s.epoch))
        assert seen == [0, 1]

    def test_ablated_configs_still_train(self, tiny_config):
        samples = _prepared(4)
        cfg = dataclasses.replace(tiny_config, epochs=1, use_augment=False,
                                  use_static=False, use_dynamic=False)
        result = train(samples, None, cfg)
        assert len(result.stats) == 1


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    cfg = Config(hidden_dim=8, word_dim=8, type_dim=4, edge_dim=4, dropout=0.0,
                 epochs=2, batch_size=4, vocab_cap=200, max_summary_len=8,
                 beam_width=3, patience=0)
    samples, _ = prepare_corpus(toy_entries())
    result = train(samples[:8], None, cfg)
    path = str(tmp_path_factory.mktemp("ckpt") / "model.ckpt")
    save_checkpoint(path, result.model, result.retrieval, result.epoch)
    return cfg, samples, result, path


class TestCheckpoint:
    def test_round_trip_restores_everything(self, trained):
        cfg, samples, result, path = trained
        model, retrieval, epoch = load_checkpoint(path)
        assert model.cfg == cfg
        assert epoch == result.epoch
        assert model.code_vocab.tokens == result.model.code_vocab.tokens
        assert model.summary_vocab.tokens == result.model.summary_vocab.tokens
        assert retrieval.backend == result.retrieval.backend
        assert retrieval.db == result.retrieval.db
        fresh = model.named_tensors()
        for name, t in result.model.named_tensors().items():
            np.testing.assert_allclose(fresh[name].data, t.data, atol=1e-7)

    def test_save_load_save_is_byte_identical(self, trained, tmp_path):
        _, _, _, path = trained
        model, retrieval, epoch = load_checkpoint(path)
        second = str(tmp_path / "again.ckpt")
        save_checkpoint(second, model, retrieval, epoch)
        with open(path, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()

    def test_wrong_format_rejected(self, trained, tmp_path):
        _, _, _, path = trained
        arrays, extra = load_archive(path)
        extra["format"] = "something-else"
        bad = str(tmp_path / "bad.ckpt")
        save_archive(bad, arrays, extra)
        with pytest.raises(DataError, match="not a model checkpoint"):
            load_checkpoint(bad)

    def test_wrong_version_rejected(self, trained, tmp_path):
        _, _, _, path = trained
        arrays, extra = load_archive(path)
        extra["format_version"] = 99
        bad = str(tmp_path / "bad.ckpt")
        save_archive(bad, arrays, extra)
        with pytest.raises(DataError, match="version"):
            load_checkpoint(bad)

    def test_config_digest_mismatch_rejected(self, trained, tmp_path):
        _, _, _, path = trained
        arrays, extra = load_archive(path)
        extra["config"] = dict(extra["config"], hops=2)
        bad = str(tmp_path / "bad.ckpt")
        save_archive(bad, arrays, extra)
        with pytest.raises(DataError, match="digest"):
            load_checkpoint(bad)

    def test_renamed_tensor_rejected(self, trained, tmp_path):
        _, _, _, path = trained
        arrays, extra = load_archive(path)
        arrays["encoder.mystery"] = arrays.pop("encoder.aug_attn_w")
        bad = str(tmp_path / "bad.ckpt")
        save_archive(bad, arrays, extra)
        with pytest.raises(DataError, match="tensor names"):
            load_checkpoint(bad)

    def test_reshaped_tensor_rejected(self, trained, tmp_path):
        _, _, _, path = trained
        arrays, extra = load_archive(path)
        arrays["encoder.aug_attn_w"] = arrays["encoder.aug_attn_w"].reshape(-1)
        bad = str(tmp_path / "bad.ckpt")
        save_archive(bad, arrays, extra)
        with pytest.raises(DataError, match="shape"):
            load_checkpoint(bad)


class TestEvaluate:
    def test_report_and_rows(self, trained):
        cfg, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        report, rows = evaluate_model(model, retrieval, samples[8:])
        assert report["samples"] == len(rows) == len(samples[8:])
        assert report["beam_width"] == cfg.beam_width
        assert report["retrieval"] == cfg.retrieval
        for key in ("bleu4", "rouge_l", "meteor"):
            assert 0.0 <= report[key] <= 1.0
        for row in rows:
            assert 0.0 <= row.bleu <= 1.0
            assert 0.0 <= row.rouge <= 1.0
            assert 0.0 <= row.meteor <= 1.0
            assert 0.0 <= row.z <= 1.0
            assert row.node_count > 0
            assert row.reference

    def test_beam_width_override_lands_in_report(self, trained):
        _, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        report, _ = evaluate_model(model, retrieval, samples[8:10], beam_width=1)
        assert report["beam_width"] == 1

    def test_deterministic(self, trained):
        _, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        first, rows_a = evaluate_model(model, retrieval, samples[8:10])
        second, rows_b = evaluate_model(model, retrieval, samples[8:10])
        assert first == second
        assert [r.prediction for r in rows_a] == [r.prediction for r in rows_b]

    def test_progress_callback(self, trained):
        _, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        seen = []
        evaluate_model(model, retrieval, samples[8:10],
                       emit=lambda done, total: seen.append((done, total)))
        assert seen == [(1, 2), (2, 2)]


class TestSummarizeOne:
    def test_basic_output(self, trained):
        _, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        out = summarize_one(model, retrieval, samples[9].code)
        assert out["summary"] == " ".join(out["tokens"])
        assert out["node_count"] == samples[9].graph.node_count
        assert 0.0 <= out["z"] <= 1.0
        assert "retrieval" not in out and "attention" not in out

    def test_retrieval_details(self, trained):
        _, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        out = summarize_one(model, retrieval, samples[9].code, show_retrieval=True)
        info = out["retrieval"]
        assert info is not None
        assert info["backend"] == retrieval.backend
        assert info["score"] == out["z"]

    def test_attention_payload(self, trained):
        cfg, samples, result, path = trained
        model, retrieval, _ = load_checkpoint(path)
        out = summarize_one(model, retrieval, samples[9].code, emit_attention=True)
        attn = out["attention"]
        assert len(attn["hops"]) == cfg.hops
        assert len(attn["decoder_steps"]) >= 1
        assert attn["augment"] is not None

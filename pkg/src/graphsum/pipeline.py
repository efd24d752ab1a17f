"""End-to-end plumbing: corpus prep, training loop, checkpoints, evaluation.

A trained artifact is one archive file holding every parameter tensor plus a
manifest with the configuration (and its digest), both vocabularies, the
retrieval corpus, and the epoch it stopped at. Loading reconstructs the model
exactly; saving what was just loaded reproduces the file byte for byte.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .cpg import CodeGraph, graph_from_source
from .decoder import DecoderParams, beam_search, teacher_forced_loss
from .encoder import EncoderParams, RetrievedContext, Vocab, encode
from .errors import AnalysisError, DataError, LexError, ParseError
from .frontend import expand_identifier_tokens
from .metrics import bleu4, meteor, meteor_sample, rouge_l, rouge_l_sample
from .retrieval import CorpusEntry, corpus_features, retrieve_top1, token_texts
from .tensor import Adam, SplitMix64, Tensor, backward, load_archive, save_archive

QUERY_ID = -1
CHECKPOINT_FORMAT = "graphsum-checkpoint"
CHECKPOINT_VERSION = 1
MAX_SKIP_RATIO = 0.2


@dataclass
class PreparedSample:
    id: int
    code: str
    graph: CodeGraph
    summary_words: list[str]


@dataclass
class Model:
    cfg: Config
    code_vocab: Vocab
    summary_vocab: Vocab
    encoder: EncoderParams
    decoder: DecoderParams

    @classmethod
    def create(cls, cfg: Config, code_vocab: Vocab, summary_vocab: Vocab,
               rng: SplitMix64) -> Model:
        enc = EncoderParams.create(cfg, len(code_vocab), len(summary_vocab), rng)
        dec = DecoderParams.create(cfg, len(summary_vocab), rng)
        return cls(cfg, code_vocab, summary_vocab, enc, dec)

    def named_tensors(self) -> dict[str, Tensor]:
        merged = {**self.encoder.named(), **self.decoder.named()}
        return {name: merged[name] for name in sorted(merged)}


@dataclass
class RetrievalState:
    backend: str
    db: list[CorpusEntry]
    features: dict[int, object]
    graphs: dict[int, CodeGraph] = field(default_factory=dict)

    @classmethod
    def build(cls, samples: list[PreparedSample], backend: str) -> RetrievalState:
        db = [CorpusEntry(s.id, s.code, " ".join(s.summary_words)) for s in samples]
        state = cls(backend, db, corpus_features(db, backend))
        for s in samples:
            state.graphs[s.id] = s.graph
        return state

    def graph_for(self, entry: CorpusEntry) -> CodeGraph:
        if entry.id not in self.graphs:
            self.graphs[entry.id] = graph_from_source(entry.code)
        return self.graphs[entry.id]


def summary_to_words(text: str) -> list[str]:
    return [w.lower() for w in text.split()]


def prepare_corpus(entries: list[CorpusEntry]) -> tuple[list[PreparedSample], list[int]]:
    """Parse every entry; skip the unparseable, abort if too many are."""
    samples: list[PreparedSample] = []
    skipped: list[int] = []
    for entry in entries:
        try:
            graph = graph_from_source(entry.code)
        except (LexError, ParseError, AnalysisError):
            skipped.append(entry.id)
            continue
        samples.append(PreparedSample(entry.id, entry.code, graph,
                                      summary_to_words(entry.summary)))
    if entries and len(skipped) / len(entries) > MAX_SKIP_RATIO:
        raise DataError(
            f"{len(skipped)} of {len(entries)} entries failed to parse; "
            f"more than {MAX_SKIP_RATIO:.0%} of the corpus is unusable"
        )
    return samples, skipped


def build_vocabs(samples: list[PreparedSample], cfg: Config) -> tuple[Vocab, Vocab]:
    code_streams = (expand_identifier_tokens(token_texts(s.code)) for s in samples)
    code_vocab = Vocab.build(code_streams, cfg.vocab_cap)
    summary_vocab = Vocab.build((s.summary_words for s in samples), cfg.vocab_cap)
    return code_vocab, summary_vocab


def retrieve_for(state: RetrievalState, code: str, query_id: int,
                 cfg: Config) -> tuple[RetrievedContext | None, CorpusEntry | None]:
    """Retrieval context for one query, or None when augmentation can't apply."""
    if not cfg.use_augment:
        return None, None
    if not any(e.id != query_id for e in state.db):
        return None, None
    hit = retrieve_top1(state.db, CorpusEntry(query_id, code, ""),
                        state.backend, state.features)
    ctx = RetrievedContext(graph=state.graph_for(hit.entry),
                           summary_words=summary_to_words(hit.entry.summary),
                           z=hit.score)
    return ctx, hit.entry


@dataclass
class EpochStats:
    epoch: int
    loss: float
    teacher_rate: float
    val_bleu: float | None
    seconds: float


@dataclass
class TrainResult:
    model: Model
    retrieval: RetrievalState
    stats: list[EpochStats]
    epoch: int


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.named_tensors().items()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for name, t in model.named_tensors().items():
        t.data = snap[name].copy()


def train(train_samples: list[PreparedSample],
          val_samples: list[PreparedSample] | None,
          cfg: Config,
          target_loss: float | None = None,
          patience: int | None = None,
          emit=None) -> TrainResult:
    """Fit a fresh model on the training samples.

    Early stopping watches greedy validation BLEU when a validation set is
    present; target_loss stops as soon as the epoch's mean loss dips below it.
    Identical inputs and config give a bit-identical model.
    """
    if not train_samples:
        raise DataError("training corpus is empty after parsing")
    rng = SplitMix64(cfg.seed)
    code_vocab, summary_vocab = build_vocabs(train_samples, cfg)
    model = Model.create(cfg, code_vocab, summary_vocab, rng)
    retrieval = RetrievalState.build(train_samples, cfg.retrieval)
    contexts = {s.id: retrieve_for(retrieval, s.code, s.id, cfg)[0]
                for s in train_samples}
    targets = {s.id: summary_vocab.encode(s.summary_words)[: cfg.max_summary_len]
               for s in train_samples}
    params = model.named_tensors()
    adam = Adam(params, lr=cfg.lr)
    wait = cfg.patience if patience is None else patience

    stats: list[EpochStats] = []
    best_bleu = -1.0
    best_snap: dict[str, np.ndarray] | None = None
    best_epoch = -1
    stale = 0
    final_epoch = 0
    for epoch in range(cfg.epochs):
        started = time.monotonic()
        order = list(range(len(train_samples)))
        rng.shuffle(order)
        loss_sum = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            for t in params.values():
                t.zero_grad()
            total = None
            for si in batch:
                sample = train_samples[si]
                enc = encode(sample.graph, contexts[sample.id], model.encoder,
                             code_vocab, summary_vocab, cfg, rng, training=True)
                loss = teacher_forced_loss(enc, targets[sample.id], model.decoder,
                                           cfg, epoch, rng, training=True)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            backward(total)
            adam.step()
            loss_sum += total.item() * len(batch)
        epoch_loss = loss_sum / len(order)
        rate = max(cfg.sched_floor, 1.0 - epoch / cfg.epochs)

        val_bleu = None
        if val_samples:
            val_bleu = _greedy_corpus_bleu(model, retrieval, val_samples)
        final_epoch = epoch
        stats.append(EpochStats(epoch, epoch_loss, rate, val_bleu,
                                time.monotonic() - started))
        if emit:
            emit(stats[-1])
        if target_loss is not None and epoch_loss <= target_loss:
            break
        if val_bleu is not None and wait > 0:
            if val_bleu > best_bleu:
                best_bleu = val_bleu
                best_snap = _snapshot(model)
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= wait:
                    break
    if best_snap is not None:
        _restore(model, best_snap)
        final_epoch = best_epoch
    return TrainResult(model, retrieval, stats, final_epoch)


def _greedy_corpus_bleu(model: Model, retrieval: RetrievalState,
                        samples: list[PreparedSample]) -> float:
    rng = SplitMix64(model.cfg.seed)
    outputs = []
    refs = []
    for s in samples:
        ctx, _ = retrieve_for(retrieval, s.code, QUERY_ID, model.cfg)
        enc = encode(s.graph, ctx, model.encoder, model.code_vocab,
                     model.summary_vocab, model.cfg, rng, training=False)
        tokens, _ = beam_search(enc, model.decoder, model.cfg, beam_width=1)
        outputs.append(model.summary_vocab.decode(tokens))
        refs.append(s.summary_words)
    return bleu4(outputs, refs)


def save_checkpoint(path: str, model: Model, retrieval: RetrievalState,
                    epoch: int) -> None:
    tensors = {name: t.data for name, t in model.named_tensors().items()}
    extra = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "config_sha256": model.cfg.sha256(),
        "code_vocab": model.code_vocab.tokens,
        "summary_vocab": model.summary_vocab.tokens,
        "retrieval": {
            "backend": retrieval.backend,
            "entries": [{"id": e.id, "code": e.code, "summary": e.summary}
                        for e in retrieval.db],
        },
        "epoch": epoch,
    }
    save_archive(path, tensors, extra)


def load_checkpoint(path: str) -> tuple[Model, RetrievalState, int]:
    arrays, extra = load_archive(path)
    if extra.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a model checkpoint")
    if extra.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {extra.get('format_version')}")
    cfg = Config.from_dict(extra["config"])
    if cfg.sha256() != extra.get("config_sha256"):
        raise DataError(f"{path}: config digest mismatch; file is corrupt")
    code_vocab = Vocab(extra["code_vocab"])
    summary_vocab = Vocab(extra["summary_vocab"])
    rng = SplitMix64(cfg.seed)
    model = Model.create(cfg, code_vocab, summary_vocab, rng)
    named = model.named_tensors()
    missing = sorted(set(named) - set(arrays))
    unexpected = sorted(set(arrays) - set(named))
    if missing or unexpected:
        raise DataError(f"{path}: tensor names do not match "
                        f"(missing {missing}, unexpected {unexpected})")
    for name, t in named.items():
        if arrays[name].shape != t.data.shape:
            raise DataError(f"{path}: tensor {name} has shape {arrays[name].shape}, "
                            f"expected {t.data.shape}")
        t.data = arrays[name].astype(np.float64)
    ret_info = extra["retrieval"]
    db = [CorpusEntry(r["id"], r["code"], r["summary"]) for r in ret_info["entries"]]
    retrieval = RetrievalState(ret_info["backend"], db,
                               corpus_features(db, ret_info["backend"]))
    return model, retrieval, int(extra["epoch"])


@dataclass
class SampleResult:
    id: int
    prediction: list[str]
    reference: list[str]
    z: float
    node_count: int
    bleu: float
    rouge: float
    meteor: float


def evaluate_model(model: Model, retrieval: RetrievalState,
                   samples: list[PreparedSample], beam_width: int | None = None,
                   emit=None) -> tuple[dict, list[SampleResult]]:
    """Decode every sample and score the corpus; returns (report, per-sample rows)."""
    cfg = model.cfg
    rng = SplitMix64(cfg.seed)
    rows: list[SampleResult] = []
    for s in samples:
        ctx, _ = retrieve_for(retrieval, s.code, QUERY_ID, cfg)
        enc = encode(s.graph, ctx, model.encoder, model.code_vocab,
                     model.summary_vocab, cfg, rng, training=False)
        tokens, _ = beam_search(enc, model.decoder, cfg, beam_width=beam_width)
        pred = model.summary_vocab.decode(tokens)
        rows.append(SampleResult(
            id=s.id, prediction=pred, reference=s.summary_words,
            z=enc.z, node_count=s.graph.node_count,
            bleu=bleu4([pred], [s.summary_words]),
            rouge=rouge_l_sample(pred, s.summary_words),
            meteor=meteor_sample(pred, s.summary_words),
        ))
        if emit:
            emit(len(rows), len(samples))
    preds = [r.prediction for r in rows]
    refs = [r.reference for r in rows]
    report = {
        "samples": len(rows),
        "beam_width": beam_width if beam_width is not None else cfg.beam_width,
        "retrieval": retrieval.backend,
        "bleu4": bleu4(preds, refs),
        "rouge_l": rouge_l(preds, refs),
        "meteor": meteor(preds, refs),
    }
    return report, rows


def summarize_one(model: Model, retrieval: RetrievalState, code: str,
                  beam_width: int | None = None, emit_attention: bool = False,
                  show_retrieval: bool = False) -> dict:
    """Summarize a single function; optionally expose attention and the neighbour."""
    cfg = model.cfg
    rng = SplitMix64(cfg.seed)
    graph = graph_from_source(code)
    ctx, entry = retrieve_for(retrieval, code, QUERY_ID, cfg)
    enc = encode(graph, ctx, model.encoder, model.code_vocab, model.summary_vocab,
                 cfg, rng, training=False)
    tokens, step_attention = beam_search(enc, model.decoder, cfg, beam_width=beam_width)
    words = model.summary_vocab.decode(tokens)
    out: dict = {
        "summary": " ".join(words),
        "tokens": words,
        "node_count": graph.node_count,
        "z": enc.z,
    }
    if show_retrieval:
        out["retrieval"] = None if entry is None else {
            "id": entry.id,
            "summary": entry.summary,
            "score": enc.z,
            "backend": retrieval.backend,
        }
    if emit_attention:
        out["attention"] = {
            "augment": None if enc.aug_attention is None else enc.aug_attention.tolist(),
            "hops": [a.tolist() for a in enc.hop_attention],
            "decoder_steps": [w.tolist() for w in step_attention],
        }
    return out

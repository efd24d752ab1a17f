"""Graph encoder: node init, retrieval augmentation, and hybrid message passing.

Every function here is pure in the tape sense: it consumes parameter tensors
and returns tensors connected to them, so one backward() call from the loss
reaches all of it. Node features start from a type embedding concatenated with
a BiLSTM read of the node's token subsequence; a retrieved similar function is
blended in through complementary attention; then each hop combines a
static pass over the typed adjacency with a dynamic pass over learned
attention, fused and folded into the node state by a GRU cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .cpg import NODE_LABELS, CodeGraph
from .errors import ContractError
from .frontend import expand_identifier_tokens
from .tensor import (
    SplitMix64,
    Tensor,
    concat,
    const,
    dropout,
    gather_elems,
    gather_rows,
    lstm_seq,
    matmul,
    max_over_rows,
    maximum,
    minimum,
    reduce_sum,
    relu,
    reshape,
    scatter_elems,
    scatter_rows_add,
    sigmoid,
    slice_axis0,
    slice_cols,
    softmax_rows,
    tanh,
    transpose,
    uniform_param,
    zeros_param,
)

NODE_INDEX = {label: i for i, label in enumerate(NODE_LABELS)}
EDGE_TYPE_COUNT = 6


class Vocab:
    """Token table with reserved slots; built from counts, ordered by (-count, token)."""

    PAD = 0
    UNK = 1
    BOS = 2
    EOS = 3
    SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:4]) != self.SPECIALS:
            raise ContractError("vocab must start with the reserved tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, streams, cap: int) -> Vocab:
        counts: dict[str, int] = {}
        for stream in streams:
            for tok in stream:
                counts[tok] = counts.get(tok, 0) + 1
        for special in cls.SPECIALS:
            counts.pop(special, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keep = [tok for tok, _ in ranked[: max(0, cap - len(cls.SPECIALS))]]
        return cls(list(cls.SPECIALS) + keep)

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.UNK)

    def encode(self, tokens) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def decode(self, indices) -> list[str]:
        return [self.tokens[i] for i in indices]


@dataclass
class BiLstm:
    fw_w: Tensor
    fw_u: Tensor
    fw_b: Tensor
    bw_w: Tensor
    bw_u: Tensor
    bw_b: Tensor

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: SplitMix64) -> BiLstm:
        half = hidden_dim // 2
        parts = []
        for _ in range(2):
            parts.append(uniform_param((input_dim, 4 * half), rng))
            parts.append(uniform_param((half, 4 * half), rng))
            parts.append(zeros_param((4 * half,)))
        return cls(*parts)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}_fw_w": self.fw_w,
            f"{prefix}_fw_u": self.fw_u,
            f"{prefix}_fw_b": self.fw_b,
            f"{prefix}_bw_w": self.bw_w,
            f"{prefix}_bw_u": self.bw_u,
            f"{prefix}_bw_b": self.bw_b,
        }


@dataclass
class EncoderParams:
    code_emb: Tensor
    summary_emb: Tensor
    type_emb: Tensor
    edge_emb: Tensor
    node_lstm: BiLstm
    summary_lstm: BiLstm
    node_proj_w: Tensor
    node_proj_b: Tensor
    aug_attn_w: Tensor
    merge_self_w: Tensor
    merge_retrieved_w: Tensor
    attn_query_w: Tensor
    attn_key_w: Tensor
    attn_edge_w: Tensor
    value_w: Tensor
    message_edge_w: Tensor
    static_edge_w: Tensor
    fuse_gate_w: Tensor
    fuse_gate_b: Tensor
    gru_input_w: Tensor
    gru_hidden_w: Tensor
    gru_b: Tensor

    @classmethod
    def create(cls, cfg: Config, code_vocab_size: int, summary_vocab_size: int,
               rng: SplitMix64) -> EncoderParams:
        d, dw, dt, de = cfg.hidden_dim, cfg.word_dim, cfg.type_dim, cfg.edge_dim
        return cls(
            code_emb=uniform_param((code_vocab_size, dw), rng),
            summary_emb=uniform_param((summary_vocab_size, dw), rng),
            type_emb=uniform_param((len(NODE_LABELS), dt), rng),
            edge_emb=uniform_param((EDGE_TYPE_COUNT, de), rng),
            node_lstm=BiLstm.create(dw, d, rng),
            summary_lstm=BiLstm.create(dw, d, rng),
            node_proj_w=uniform_param((dt + d, d), rng),
            node_proj_b=zeros_param((d,)),
            aug_attn_w=uniform_param((d, d), rng),
            merge_self_w=uniform_param((d, d), rng),
            merge_retrieved_w=uniform_param((d, d), rng),
            attn_query_w=uniform_param((d, d), rng),
            attn_key_w=uniform_param((d, d), rng),
            attn_edge_w=uniform_param((de, d), rng),
            value_w=uniform_param((d, d), rng),
            message_edge_w=uniform_param((de, d), rng),
            static_edge_w=uniform_param((de, d), rng),
            fuse_gate_w=uniform_param((4 * d, d), rng),
            fuse_gate_b=zeros_param((d,)),
            gru_input_w=uniform_param((d, 3 * d), rng),
            gru_hidden_w=uniform_param((d, 3 * d), rng),
            gru_b=zeros_param((3 * d,)),
        )

    def named(self) -> dict[str, Tensor]:
        out = {
            "encoder.code_token_embedding": self.code_emb,
            "encoder.summary_token_embedding": self.summary_emb,
            "encoder.node_type_embedding": self.type_emb,
            "encoder.edge_type_embedding": self.edge_emb,
            "encoder.node_proj_w": self.node_proj_w,
            "encoder.node_proj_b": self.node_proj_b,
            "encoder.aug_attn_w": self.aug_attn_w,
            "encoder.merge_self_w": self.merge_self_w,
            "encoder.merge_retrieved_w": self.merge_retrieved_w,
            "encoder.attn_query_w": self.attn_query_w,
            "encoder.attn_key_w": self.attn_key_w,
            "encoder.attn_edge_w": self.attn_edge_w,
            "encoder.value_w": self.value_w,
            "encoder.message_edge_w": self.message_edge_w,
            "encoder.static_edge_w": self.static_edge_w,
            "encoder.fuse_gate_w": self.fuse_gate_w,
            "encoder.fuse_gate_b": self.fuse_gate_b,
            "encoder.gru_input_w": self.gru_input_w,
            "encoder.gru_hidden_w": self.gru_hidden_w,
            "encoder.gru_b": self.gru_b,
        }
        out.update(self.node_lstm.named("encoder.node_lstm"))
        out.update(self.summary_lstm.named("encoder.summary_lstm"))
        return out


@dataclass
class RetrievedContext:
    """What retrieval hands the encoder: the neighbour's graph, summary, and weight."""

    graph: CodeGraph
    summary_words: list[str]
    z: float


@dataclass
class EdgePairs:
    """Ordered connected node pairs (both directions, no self) plus type multi-hots."""

    src: np.ndarray
    dst: np.ndarray
    type_hot: np.ndarray

    @property
    def count(self) -> int:
        return int(self.src.shape[0])


@dataclass
class EncodedFunction:
    node_init: Tensor
    merged: Tensor
    node_reps: Tensor
    graph_rep: Tensor
    summary_states: Tensor
    z: float
    aug_attention: np.ndarray | None = None
    hop_attention: list[np.ndarray] = field(default_factory=list)


def bilstm_encode(indices: list[int], emb: Tensor, lstm: BiLstm, drop: float,
                  rng: SplitMix64, training: bool) -> tuple[Tensor, Tensor]:
    """Encode one index sequence; returns (states (L, d), final (1, d)).

    The final vector concatenates the last forward state with the first
    backward state. An empty sequence is read as a single padding step.
    """
    if not indices:
        indices = [Vocab.PAD]
    length = len(indices)
    x = dropout(gather_rows(emb, indices), drop, rng, training)
    x3 = reshape(x, (length, 1, emb.shape[1]))
    mask = np.ones((length, 1))
    fwd = lstm_seq(x3, lstm.fw_w, lstm.fw_u, lstm.fw_b, mask)
    bwd = lstm_seq(x3, lstm.bw_w, lstm.bw_u, lstm.bw_b, mask, reverse=True)
    states = reshape(concat([fwd, bwd], axis=2), (length, -1))
    final = concat([slice_axis0(fwd, length - 1), slice_axis0(bwd, 0)], axis=1)
    return dropout(states, drop, rng, training), dropout(final, drop, rng, training)


def init_nodes(graph: CodeGraph, params: EncoderParams, vocab: Vocab, cfg: Config,
               rng: SplitMix64, training: bool) -> Tensor:
    """Initial node matrix (m, d): type embedding joined with a token BiLSTM read."""
    type_idx = []
    for node in graph.nodes:
        if node.label not in NODE_INDEX:
            raise ContractError(f"unknown node label {node.label!r}")
        type_idx.append(NODE_INDEX[node.label])
    seqs = [vocab.encode(expand_identifier_tokens(n.tokens)) or [Vocab.PAD]
            for n in graph.nodes]
    m = len(seqs)
    longest = max(len(s) for s in seqs)
    idx = np.zeros((longest, m), dtype=np.int64)
    mask = np.zeros((longest, m))
    for v, seq in enumerate(seqs):
        idx[: len(seq), v] = seq
        mask[: len(seq), v] = 1.0
    x = dropout(gather_rows(params.code_emb, idx.reshape(-1)), cfg.dropout, rng, training)
    x3 = reshape(x, (longest, m, cfg.word_dim))
    fwd = lstm_seq(x3, params.node_lstm.fw_w, params.node_lstm.fw_u, params.node_lstm.fw_b, mask)
    bwd = lstm_seq(x3, params.node_lstm.bw_w, params.node_lstm.bw_u, params.node_lstm.bw_b,
                   mask, reverse=True)
    token_read = concat([slice_axis0(fwd, longest - 1), slice_axis0(bwd, 0)], axis=1)
    token_read = dropout(token_read, cfg.dropout, rng, training)
    type_vecs = gather_rows(params.type_emb, type_idx)
    joined = concat([type_vecs, token_read], axis=1)
    return matmul(joined, params.node_proj_w) + params.node_proj_b


def complementary_attention(h_self: Tensor, h_ret: Tensor, aug_w: Tensor) -> Tensor:
    """Row-normalized affinity from each node to every retrieved node."""
    q = relu(matmul(h_self, aug_w))
    k = relu(matmul(h_ret, aug_w))
    return softmax_rows(matmul(q, transpose(k)))


def inject_retrieved(a_aug: Tensor, h_ret: Tensor, z: float) -> Tensor:
    return matmul(a_aug, h_ret) * z


def merge_retrieved(h_self: Tensor, h_aug: Tensor, params: EncoderParams) -> Tensor:
    return matmul(h_self, params.merge_self_w) + matmul(h_aug, params.merge_retrieved_w)


def encode_retrieved_summary(words: list[str], params: EncoderParams, vocab: Vocab,
                             z: float, cfg: Config, rng: SplitMix64,
                             training: bool) -> Tensor:
    """Confidence-weighted BiLSTM states of the neighbour's summary, (T, d)."""
    if not words:
        return const(np.zeros((0, cfg.hidden_dim)))
    states, _ = bilstm_encode(vocab.encode(words), params.summary_emb,
                              params.summary_lstm, cfg.dropout, rng, training)
    return states * z


def edge_pairs(graph: CodeGraph) -> EdgePairs:
    conn = graph.adjacency.any(axis=0)
    sym = conn | conn.T
    np.fill_diagonal(sym, False)
    src, dst = np.nonzero(sym)
    hot = (graph.adjacency[:, src, dst] | graph.adjacency[:, dst, src]).T.astype(np.float64)
    return EdgePairs(src, dst, hot)


def pair_edge_vectors(pairs: EdgePairs, params: EncoderParams) -> Tensor | None:
    """Summed type embeddings per connected pair, (P, edge_dim)."""
    if pairs.count == 0:
        return None
    return matmul(const(pairs.type_hot), params.edge_emb)


def dynamic_attention(h: Tensor, pairs: EdgePairs, edge_vec: Tensor | None,
                      params: EncoderParams, cfg: Config) -> Tensor:
    """Raw directed scores over all ordered node pairs, edge-aware where connected."""
    q = relu(matmul(h, params.attn_query_w))
    k = relu(matmul(h, params.attn_key_w))
    scores = matmul(q, transpose(k))
    if edge_vec is not None:
        r = relu(matmul(edge_vec, params.attn_edge_w))
        qi = gather_rows(q, pairs.src)
        extra = reduce_sum(qi * r, axis=1)
        m = h.shape[0]
        scores = scores + scatter_elems(extra, pairs.src, pairs.dst, (m, m))
    return scores * (1.0 / math.sqrt(cfg.hidden_dim))


def split_normalize(scores: Tensor) -> tuple[Tensor, Tensor]:
    """Row-normalize the score matrix and its transpose (incoming/outgoing views)."""
    return softmax_rows(scores), softmax_rows(transpose(scores))


def fuse(a: Tensor, b: Tensor, gate_w: Tensor, gate_b: Tensor) -> Tensor:
    """Gated blend: sigmoid gate over [a; b; a*b; a-b] picks between the two.

    Clamped to the componentwise input interval; the blend only leaves it by
    rounding, so the clamp is gradient-transparent almost everywhere.
    """
    g = sigmoid(matmul(concat([a, b, a * b, a - b], axis=1), gate_w) + gate_b)
    blend = g * a + (1.0 - g) * b
    return maximum(minimum(blend, maximum(a, b)), minimum(a, b))


def static_message_pass(h: Tensor, graph: CodeGraph, params: EncoderParams,
                        cfg: Config) -> Tensor:
    """Aggregate neighbours over the typed adjacency, one direction at a time.

    Incoming: for each edge type, messages flow along edges into the node plus
    an indegree-scaled projection of the type embedding; outgoing mirrors it.
    Mean aggregation divides by the node's total contribution count.
    """
    adj = graph.adjacency.astype(np.float64)
    proj = matmul(params.edge_emb, params.static_edge_w)
    indeg = adj.sum(axis=1).T
    outdeg = adj.sum(axis=2).T
    h_in = matmul(const(adj.sum(axis=0).T), h) + matmul(const(indeg), proj)
    h_out = matmul(const(adj.sum(axis=0)), h) + matmul(const(outdeg), proj)
    if cfg.static_agg == "mean":
        h_in = h_in * const(1.0 / np.maximum(indeg.sum(axis=1, keepdims=True), 1.0))
        h_out = h_out * const(1.0 / np.maximum(outdeg.sum(axis=1, keepdims=True), 1.0))
    return fuse(h_in, h_out, params.fuse_gate_w, params.fuse_gate_b)


def dynamic_message_pass(h: Tensor, a_in: Tensor, a_out: Tensor, pairs: EdgePairs,
                         edge_vec: Tensor | None, params: EncoderParams) -> Tensor:
    """Attention-weighted value aggregation, edge features riding along."""
    values = matmul(h, params.value_w)
    m = h.shape[0]

    def side(weights: Tensor) -> Tensor:
        out = matmul(weights, values)
        if edge_vec is not None:
            f = matmul(edge_vec, params.message_edge_w)
            w_pair = reshape(gather_elems(weights, pairs.src, pairs.dst), (pairs.count, 1))
            out = out + scatter_rows_add(f * w_pair, pairs.src, m)
        return out

    return fuse(side(a_in), side(a_out), params.fuse_gate_w, params.fuse_gate_b)


def hybrid_step(h_prev: Tensor, x: Tensor, params: EncoderParams, cfg: Config) -> Tensor:
    """GRU cell folding the fused message into the node state."""
    d = cfg.hidden_dim
    zx = matmul(x, params.gru_input_w) + params.gru_b
    zh = matmul(h_prev, params.gru_hidden_w)
    reset = sigmoid(slice_cols(zx, 0, d) + slice_cols(zh, 0, d))
    update = sigmoid(slice_cols(zx, d, 2 * d) + slice_cols(zh, d, 2 * d))
    fresh = tanh(slice_cols(zx, 2 * d, 3 * d) + reset * slice_cols(zh, 2 * d, 3 * d))
    return (1.0 - update) * fresh + update * h_prev


def encode(graph: CodeGraph, retrieved: RetrievedContext | None, params: EncoderParams,
           code_vocab: Vocab, summary_vocab: Vocab, cfg: Config, rng: SplitMix64,
           training: bool = False) -> EncodedFunction:
    """Full encoder forward pass for one function."""
    h0 = init_nodes(graph, params, code_vocab, cfg, rng, training)
    m = h0.shape[0]
    if retrieved is None:
        z = 0.0
        aug = None
        h_aug = const(np.zeros((m, cfg.hidden_dim)))
        summary_states = const(np.zeros((0, cfg.hidden_dim)))
    else:
        z = retrieved.z
        h_ret = init_nodes(retrieved.graph, params, code_vocab, cfg, rng, training)
        a_aug = complementary_attention(h0, h_ret, params.aug_attn_w)
        aug = a_aug.data.copy()
        h_aug = inject_retrieved(a_aug, h_ret, z)
        summary_states = encode_retrieved_summary(retrieved.summary_words, params,
                                                  summary_vocab, z, cfg, rng, training)
    merged = merge_retrieved(h0, h_aug, params)

    pairs = edge_pairs(graph)
    edge_vec = pair_edge_vectors(pairs, params)
    h = merged
    hop_attn: list[np.ndarray] = []
    for _ in range(cfg.hops):
        if cfg.use_static:
            h_sta = static_message_pass(h, graph, params, cfg)
        else:
            h_sta = const(np.zeros((m, cfg.hidden_dim)))
        if cfg.use_dynamic:
            scores = dynamic_attention(h, pairs, edge_vec, params, cfg)
            a_in, a_out = split_normalize(scores)
            hop_attn.append(a_in.data.copy())
            h_dyn = dynamic_message_pass(h, a_in, a_out, pairs, edge_vec, params)
        else:
            h_dyn = const(np.zeros((m, cfg.hidden_dim)))
        fused = fuse(h_sta, h_dyn, params.fuse_gate_w, params.fuse_gate_b)
        h = hybrid_step(h, fused, params, cfg)
    graph_rep = reshape(max_over_rows(h), (1, cfg.hidden_dim))
    return EncodedFunction(node_init=h0, merged=merged, node_reps=h, graph_rep=graph_rep,
                           summary_states=summary_states, z=z, aug_attention=aug,
                           hop_attention=hop_attn)

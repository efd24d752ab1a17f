"""Attention LSTM decoder over the encoded function.

The decoder attends over a memory of final node states plus the
confidence-weighted summary states of the retrieved neighbour (dropped
entirely when the confidence is exactly zero, so an absent neighbour leaves
no trace). Training uses scheduled sampling that decays from full teacher
forcing to a floor; inference runs a length-normalized beam search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import Config
from .encoder import EncodedFunction, Vocab, fuse
from .errors import ContractError
from .tensor import (
    SplitMix64,
    Tensor,
    concat,
    const,
    cross_entropy_row,
    gather_rows,
    matmul,
    reshape,
    sigmoid,
    slice_axis0,
    slice_cols,
    softmax_rows,
    tanh,
    transpose,
    uniform_param,
    zeros_param,
)


@dataclass
class DecoderParams:
    emb: Tensor
    lstm_w: Tensor
    lstm_u: Tensor
    lstm_b: Tensor
    attn_w: Tensor
    out_w: Tensor
    out_b: Tensor
    init_fuse_w: Tensor
    init_fuse_b: Tensor

    @classmethod
    def create(cls, cfg: Config, summary_vocab_size: int, rng: SplitMix64) -> DecoderParams:
        d, dw = cfg.hidden_dim, cfg.word_dim
        return cls(
            emb=uniform_param((summary_vocab_size, dw), rng),
            lstm_w=uniform_param((dw + d, 4 * d), rng),
            lstm_u=uniform_param((d, 4 * d), rng),
            lstm_b=zeros_param((4 * d,)),
            attn_w=uniform_param((d, d), rng),
            out_w=uniform_param((2 * d, summary_vocab_size), rng),
            out_b=zeros_param((summary_vocab_size,)),
            init_fuse_w=uniform_param((4 * d, d), rng),
            init_fuse_b=zeros_param((d,)),
        )

    def named(self) -> dict[str, Tensor]:
        return {
            "decoder.summary_embedding": self.emb,
            "decoder.lstm_w": self.lstm_w,
            "decoder.lstm_u": self.lstm_u,
            "decoder.lstm_b": self.lstm_b,
            "decoder.attn_w": self.attn_w,
            "decoder.out_proj_w": self.out_w,
            "decoder.out_proj_b": self.out_b,
            "decoder.init_fuse_w": self.init_fuse_w,
            "decoder.init_fuse_b": self.init_fuse_b,
        }


def build_memory(encoded: EncodedFunction) -> Tensor:
    """Attention memory: node states, then summary states unless confidence is zero."""
    summary = encoded.summary_states
    if encoded.z == 0.0 or summary.shape[0] == 0:
        return encoded.node_reps
    return concat([encoded.node_reps, summary], axis=0)


def summary_final_state(encoded: EncodedFunction, d: int) -> Tensor:
    """Final BiLSTM read of the retrieved summary, recovered from its states."""
    states = encoded.summary_states
    steps = states.shape[0]
    if steps == 0:
        return const(np.zeros((1, d)))
    half = d // 2
    last_row = reshape(slice_axis0(states, steps - 1), (1, d))
    first_row = reshape(slice_axis0(states, 0), (1, d))
    return concat([slice_cols(last_row, 0, half), slice_cols(first_row, half, d)], axis=1)


def init_state(encoded: EncodedFunction, params: DecoderParams,
               cfg: Config) -> tuple[Tensor, Tensor]:
    """Starting (hidden, cell): fused graph and summary reads, zero cell."""
    d = cfg.hidden_dim
    h0 = fuse(encoded.graph_rep, summary_final_state(encoded, d),
              params.init_fuse_w, params.init_fuse_b)
    return h0, const(np.zeros((1, d)))


def attention_context(state: Tensor, memory: Tensor,
                      attn_w: Tensor) -> tuple[Tensor, Tensor]:
    """Bilinear attention of the decoder state over memory rows."""
    if memory.shape[0] == 0:
        raise ContractError("attention over empty memory")
    scores = matmul(matmul(state, attn_w), transpose(memory))
    weights = softmax_rows(scores)
    return matmul(weights, memory), weights


def decode_step(prev_token: int, hidden: Tensor, cell: Tensor, memory: Tensor,
                params: DecoderParams, cfg: Config,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """One LSTM step; returns (logits, hidden', cell', attention weights)."""
    d = cfg.hidden_dim
    context, weights = attention_context(hidden, memory, params.attn_w)
    x = concat([gather_rows(params.emb, [prev_token]), context], axis=1)
    gates = matmul(x, params.lstm_w) + matmul(hidden, params.lstm_u) + params.lstm_b
    i_gate = sigmoid(slice_cols(gates, 0, d))
    f_gate = sigmoid(slice_cols(gates, d, 2 * d))
    g_gate = tanh(slice_cols(gates, 2 * d, 3 * d))
    o_gate = sigmoid(slice_cols(gates, 3 * d, 4 * d))
    new_cell = f_gate * cell + i_gate * g_gate
    new_hidden = o_gate * tanh(new_cell)
    logits = matmul(concat([new_hidden, context], axis=1), params.out_w) + params.out_b
    return logits, new_hidden, new_cell, weights


def teacher_forcing_rate(epoch: int, total_epochs: int, floor: float) -> float:
    return max(floor, 1.0 - epoch / total_epochs)


def teacher_forced_loss(encoded: EncodedFunction, target: list[int],
                        params: DecoderParams, cfg: Config, epoch: int,
                        rng: SplitMix64, training: bool = True) -> Tensor:
    """Mean cross-entropy over the target plus end marker, fed from the start marker.

    With probability 1-p per step (only once the rate drops below one) the
    model's own argmax replaces the gold token as the next input.
    """
    memory = build_memory(encoded)
    hidden, cell = init_state(encoded, params, cfg)
    rate = teacher_forcing_rate(epoch, cfg.epochs, cfg.sched_floor)
    prev = Vocab.BOS
    losses = []
    for gold in list(target) + [Vocab.EOS]:
        logits, hidden, cell, _ = decode_step(prev, hidden, cell, memory, params, cfg)
        losses.append(cross_entropy_row(logits, gold))
        if training and rate < 1.0 and rng.uniform() >= rate:
            prev = int(np.argmax(logits.data))
        else:
            prev = gold
    total = losses[0]
    for piece in losses[1:]:
        total = total + piece
    return total * (1.0 / len(losses))


def log_softmax_row(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    return logits - (m + math.log(np.exp(logits - m).sum()))


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    norm_len: int
    hidden: Tensor | None
    cell: Tensor | None
    attention: tuple[np.ndarray, ...]

    def score(self, alpha: float) -> float:
        return self.logprob / (max(1, self.norm_len) ** alpha)


def _beam_best(encoded: EncodedFunction, params: DecoderParams, cfg: Config,
               width: int, limit: int, length_alpha: float) -> Hypothesis:
    memory = build_memory(encoded)
    h0, c0 = init_state(encoded, params, cfg)
    live = [Hypothesis((), 0.0, 0, h0, c0, ())]
    finished: list[Hypothesis] = []
    for _ in range(limit):
        if not live or len(finished) >= width:
            break
        candidates = []
        for hyp_index, hyp in enumerate(live):
            prev = hyp.tokens[-1] if hyp.tokens else Vocab.BOS
            logits, h2, c2, attn = decode_step(prev, hyp.hidden, hyp.cell, memory,
                                               params, cfg)
            logp = log_softmax_row(logits.data.reshape(-1))
            logp[Vocab.PAD] = -np.inf
            logp[Vocab.BOS] = -np.inf
            order = np.lexsort((np.arange(logp.shape[0]), -logp))
            for tok in order[:width]:
                candidates.append((hyp.logprob + float(logp[tok]), int(tok),
                                   hyp_index, h2, c2, attn))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_live = []
        for total_lp, tok, hyp_index, h2, c2, attn in candidates[:width]:
            hyp = live[hyp_index]
            steps = hyp.attention + (attn.data.reshape(-1).copy(),)
            if tok == Vocab.EOS:
                finished.append(Hypothesis(hyp.tokens, total_lp, len(hyp.tokens) + 1,
                                           None, None, steps))
            else:
                next_live.append(Hypothesis(hyp.tokens + (tok,), total_lp,
                                            len(hyp.tokens) + 1, h2, c2, steps))
        live = next_live
    pool = finished + live
    return sorted(pool, key=lambda h: (-h.score(length_alpha), h.tokens))[0]


def beam_search(encoded: EncodedFunction, params: DecoderParams, cfg: Config,
                beam_width: int | None = None, max_len: int | None = None,
                length_alpha: float = 0.7) -> tuple[list[int], list[np.ndarray]]:
    """Length-normalized beam decode; returns (tokens, per-step attention).

    Width one reduces exactly to greedy decoding. For wider beams the greedy
    rollout joins the candidate pool, so widening the beam never returns a
    hypothesis scoring below greedy's. Start/padding markers are suppressed at
    selection time only; ties break toward the lower token index.
    """
    width = beam_width if beam_width is not None else cfg.beam_width
    limit = max_len if max_len is not None else cfg.max_summary_len
    if width < 1:
        raise ContractError(f"beam width must be >= 1, got {width}")
    pool = [_beam_best(encoded, params, cfg, width, limit, length_alpha)]
    if width > 1:
        pool.append(_beam_best(encoded, params, cfg, 1, limit, length_alpha))
    best = sorted(pool, key=lambda h: (-h.score(length_alpha), h.tokens))[0]
    return list(best.tokens), list(best.attention)

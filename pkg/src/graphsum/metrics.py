"""Summary quality metrics: corpus BLEU-4, ROUGE-L, and exact-match METEOR.

All three take pre-tokenized word lists. BLEU is corpus-level with add-one
smoothing on the higher-order precisions only; ROUGE-L and METEOR are averaged
per sample.
"""

from __future__ import annotations

import math

from .errors import ContractError


def _ngram_counts(tokens: list[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        key = tuple(tokens[i : i + n])
        counts[key] = counts.get(key, 0) + 1
    return counts


def bleu4(candidates: list[list[str]], references: list[list[str]]) -> float:
    """Corpus BLEU with 4-gram cap.

    Unigram precision is unsmoothed; n >= 2 precisions get add-one smoothing
    ((matches+1)/(total+1)). Brevity penalty uses corpus-total lengths.
    """
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    matched = [0] * 5
    attempted = [0] * 5
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            attempted[n] += max(0, len(cand) - n + 1)
            for gram, count in cand_counts.items():
                matched[n] += min(count, ref_counts.get(gram, 0))
    if cand_len == 0 or attempted[1] == 0 or matched[1] == 0:
        return 0.0
    log_precision = math.log(matched[1] / attempted[1])
    for n in range(2, 5):
        log_precision += math.log((matched[n] + 1) / (attempted[n] + 1))
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision / 4.0)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ta in a:
        cur = [0] * (len(b) + 1)
        for j, tb in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if ta == tb else max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l_sample(candidate: list[str], reference: list[str], beta: float = 1.2) -> float:
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    b2 = beta * beta
    return (1 + b2) * recall * precision / (recall + b2 * precision)


def rouge_l(candidates: list[list[str]], references: list[list[str]]) -> float:
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    return sum(rouge_l_sample(c, r) for c, r in zip(candidates, references)) / len(candidates)


def _meteor_align(candidate: list[str], reference: list[str]) -> tuple[int, int]:
    """Greedy left-to-right exact alignment; returns (matches, chunks).

    Each candidate token takes the reference position that extends the current
    run when that position holds the same word and is free, otherwise the
    smallest free position. A chunk is a maximal run contiguous in both
    sequences.
    """
    used = [False] * len(reference)
    matches = 0
    chunks = 0
    prev_pos = -2
    run_alive = False
    for word in candidate:
        pos = -1
        follow = prev_pos + 1
        if run_alive and 0 <= follow < len(reference) and not used[follow] \
                and reference[follow] == word:
            pos = follow
        else:
            for j, ref_word in enumerate(reference):
                if ref_word == word and not used[j]:
                    pos = j
                    break
        if pos < 0:
            run_alive = False
            continue
        used[pos] = True
        matches += 1
        if not (run_alive and pos == prev_pos + 1):
            chunks += 1
        prev_pos = pos
        run_alive = True
    return matches, chunks


def meteor_sample(candidate: list[str], reference: list[str]) -> float:
    if not candidate or not reference:
        return 0.0
    matches, chunks = _meteor_align(candidate, reference)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    fscore = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return fscore * (1.0 - penalty)


def meteor(candidates: list[list[str]], references: list[list[str]]) -> float:
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    return sum(meteor_sample(c, r) for c, r in zip(candidates, references)) / len(candidates)

"""Nearest-neighbour lookup over a code corpus.

Two interchangeable backends score a query function against every stored
entry: a bag-of-words cosine over expanded identifier subtokens, and a
normalized token-level edit distance. The winner's score doubles as the
confidence weight that scales how much of the retrieved material the encoder
lets through.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DataError, RetrievalError
from .frontend import TokenKind, expand_identifier_tokens, tokenize

BACKENDS = ("cosine", "edit")


@dataclass(frozen=True)
class CorpusEntry:
    id: int
    code: str
    summary: str


@dataclass(frozen=True)
class RetrievalHit:
    entry: CorpusEntry
    score: float


def bow_vector(code: str) -> dict[str, int]:
    """Count identifier subtokens, keywords, and numbers; drop the rest.

    Operators, punctuation, and string/char literals say nothing about what a
    function is about, so they never enter the bag.
    """
    counts: dict[str, int] = {}
    for tok in tokenize(code):
        if tok.kind is TokenKind.IDENT:
            words = expand_identifier_tokens([tok.text])
        elif tok.kind in (TokenKind.KEYWORD, TokenKind.NUMBER):
            words = [tok.text]
        else:
            continue
        for w in words:
            counts[w] = counts.get(w, 0) + 1
    return counts


def cosine_similarity(u: dict[str, int], v: dict[str, int]) -> float:
    if not u or not v:
        return 0.0
    dot = sum(c * v[w] for w, c in u.items() if w in v)
    nu = math.sqrt(sum(c * c for c in u.values()))
    nv = math.sqrt(sum(c * c for c in v.values()))
    return dot / (nu * nv)


def token_texts(code: str) -> list[str]:
    return [tok.text for tok in tokenize(code)]


def edit_distance_similarity(a: list[str], b: list[str]) -> float:
    """1 - levenshtein(a, b) / max(len(a), len(b)); two empty sequences match."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if ta == tb else 1),
            )
        prev = cur
    return 1.0 - prev[len(b)] / longest


def corpus_features(db: list[CorpusEntry], backend: str) -> dict[int, object]:
    """Precompute per-entry features so repeated queries skip re-lexing."""
    if backend == "cosine":
        return {e.id: bow_vector(e.code) for e in db}
    if backend == "edit":
        return {e.id: token_texts(e.code) for e in db}
    raise RetrievalError(f"unknown retrieval backend {backend!r}")


def retrieve_top1(
    db: list[CorpusEntry],
    query: CorpusEntry,
    backend: str = "cosine",
    features: dict[int, object] | None = None,
) -> RetrievalHit:
    """Best non-self corpus entry for the query; ties go to the lowest id."""
    candidates = [e for e in db if e.id != query.id]
    if not candidates:
        raise RetrievalError("retrieval corpus has no candidate besides the query")
    if features is None:
        features = corpus_features(db, backend)
    if backend == "cosine":
        q_bow = bow_vector(query.code)

        def score(e: CorpusEntry) -> float:
            return cosine_similarity(q_bow, features[e.id])

    elif backend == "edit":
        q_toks = token_texts(query.code)

        def score(e: CorpusEntry) -> float:
            return edit_distance_similarity(q_toks, features[e.id])

    else:
        raise RetrievalError(f"unknown retrieval backend {backend!r}")

    best: CorpusEntry | None = None
    best_score = -1.0
    for entry in sorted(candidates, key=lambda e: e.id):
        s = score(entry)
        if s > best_score:
            best, best_score = entry, s
    assert best is not None
    return RetrievalHit(best, best_score)


def load_corpus(path: str) -> list[CorpusEntry]:
    """Read a JSONL corpus of {id, code, summary} records."""
    entries: list[CorpusEntry] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: expected an object")
            for key, typ in (("id", int), ("code", str), ("summary", str)):
                if key not in rec:
                    raise DataError(f"{path}:{lineno}: missing field {key!r}")
                if not isinstance(rec[key], typ) or isinstance(rec[key], bool):
                    raise DataError(f"{path}:{lineno}: field {key!r} must be {typ.__name__}")
            if rec["id"] in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {rec['id']}")
            seen.add(rec["id"])
            entries.append(CorpusEntry(rec["id"], rec["code"], rec["summary"]))
    return entries


def save_corpus(path: str, entries: list[CorpusEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({"id": e.id, "code": e.code, "summary": e.summary}) + "\n")

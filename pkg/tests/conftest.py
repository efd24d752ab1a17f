"""Shared fixtures: tiny configs, toy corpora, and a random program generator."""

from __future__ import annotations

import json
import random

import pytest

from graphsum.config import Config
from graphsum.retrieval import CorpusEntry

_OPS = ["+", "-", "*"]
_CMPS = ["<", ">", "<=", ">=", "==", "!="]


class ProgramBuilder:
    """Grows a random straight-line/if-else function, acyclic by construction."""

    def __init__(self, rng: random.Random, max_stmts: int = 12):
        self.rng = rng
        self.budget = rng.randint(1, max_stmts)
        self.vars = ["a", "b"]
        self.fresh = 0

    def expr(self) -> str:
        r = self.rng
        pick = r.random()
        if pick < 0.3:
            return str(r.randint(0, 9))
        if pick < 0.6:
            return r.choice(self.vars)
        return f"{r.choice(self.vars)} {r.choice(_OPS)} {r.choice([str(r.randint(1, 9)), r.choice(self.vars)])}"

    def stmt(self, depth: int) -> str:
        r = self.rng
        self.budget -= 1
        roll = r.random()
        if roll < 0.35:
            self.fresh += 1
            name = f"v{self.fresh}"
            line = f"int {name} = {self.expr()};"
            self.vars.append(name)
            return line
        if roll < 0.6:
            return f"{r.choice(self.vars)} = {self.expr()};"
        if roll < 0.7:
            return f"{r.choice(self.vars)} {r.choice(['+=', '-=', '*='])} {r.choice(self.vars)};"
        if roll < 0.8 or depth >= 2:
            return f"use({r.choice(self.vars)});"
        cond = f"{r.choice(self.vars)} {r.choice(_CMPS)} {r.randint(0, 9)}"
        body = self.block(depth + 1)
        if r.random() < 0.5:
            return f"if ({cond}) {body}"
        return f"if ({cond}) {body} else {self.block(depth + 1)}"

    def block(self, depth: int) -> str:
        n = self.rng.randint(1, 3)
        stmts = []
        saved = list(self.vars)
        for _ in range(n):
            if self.budget <= 0:
                break
            stmts.append(self.stmt(depth))
        self.vars = saved
        if not stmts:
            stmts = [f"use({self.rng.choice(self.vars)});"]
        return "{ " + " ".join(stmts) + " }"

    def build(self) -> str:
        stmts = []
        while self.budget > 0:
            stmts.append(self.stmt(0))
        stmts.append(f"return {self.rng.choice(self.vars)};")
        return "int fn(int a, int b) { " + " ".join(stmts) + " }"


def random_program(seed: int, max_stmts: int = 12) -> str:
    return ProgramBuilder(random.Random(seed), max_stmts).build()


@pytest.fixture
def tiny_config() -> Config:
    return Config(hidden_dim=8, word_dim=8, type_dim=4, edge_dim=4, dropout=0.0,
                  epochs=4, batch_size=4, vocab_cap=200, max_summary_len=8,
                  beam_width=3).validate()


TOY_FUNCTIONS = [
    ("int add(int a, int b) { return a + b; }", "add two numbers"),
    ("int sub(int a, int b) { return a - b; }", "subtract second from first"),
    ("int mul(int a, int b) { return a * b; }", "multiply two numbers"),
    ("int neg(int a) { return -a; }", "negate the value"),
    ("int maxv(int a, int b) { if (a > b) { return a; } return b; }",
     "return the larger value"),
    ("int minv(int a, int b) { if (a < b) { return a; } return b; }",
     "return the smaller value"),
    ("int isodd(int a) { return a % 2; }", "check if the value is odd"),
    ("int clampz(int a) { if (a < 0) { a = 0; } return a; }",
     "clamp negative values to zero"),
    ("int total(int n) { int s = 0; while (n > 0) { s = s + n; n = n - 1; } return s; }",
     "sum the first n numbers"),
    ("int twice(int a) { return a + a; }", "double the value"),
    ("int square(int a) { return a * a; }", "square the value"),
    ("int diffabs(int a, int b) { int d = a - b; if (d < 0) { d = -d; } return d; }",
     "absolute difference of two numbers"),
]


def toy_entries() -> list[CorpusEntry]:
    return [CorpusEntry(i, code, summary) for i, (code, summary) in enumerate(TOY_FUNCTIONS)]


@pytest.fixture
def toy_corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for e in toy_entries():
            fh.write(json.dumps({"id": e.id, "code": e.code, "summary": e.summary}) + "\n")
    return str(path)

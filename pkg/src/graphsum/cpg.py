"""Code property graph construction.

A function's graph holds every AST node plus synthetic Entry/Exit, and six edge
planes: syntax (parent to child), statement-level control flow, reaching
definitions, control dependence, and define/use edges from statements to the
identifier occurrences they write/read. The adjacency tensor is boolean with
shape (edge types, m, m) and an empty diagonal.

Control dependence is structural: a statement depends on the innermost
if/while/for condition whose branch or body contains it, nesting included.
Reaching definitions are the usual forward may-analysis over gen/kill sets;
loop-carried self-dependences stay in the triple list but are masked out of
the adjacency (no self-loops).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import json

import numpy as np

from .errors import AnalysisError
from .frontend import AstNode, NodeType

DefUse = dict[int, tuple[list[tuple[str, int]], list[tuple[str, int]]]]


class EdgeType(IntEnum):
    AST = 0
    FLOW_TO = 1
    REACH = 2
    CONTROL = 3
    DEFINE = 4
    USE = 5


EDGE_LABELS = {
    EdgeType.AST: "ast",
    EdgeType.FLOW_TO: "flow_to",
    EdgeType.REACH: "reach",
    EdgeType.CONTROL: "control",
    EdgeType.DEFINE: "define",
    EdgeType.USE: "use",
}
_LABEL_TO_EDGE = {v: k for k, v in EDGE_LABELS.items()}

ENTRY_LABEL = "Entry"
EXIT_LABEL = "Exit"

# closed label set; the encoder's node-type embedding indexes into this order
NODE_LABELS: tuple[str, ...] = tuple(t.value for t in NodeType) + (ENTRY_LABEL, EXIT_LABEL)

# statement kinds that become flow-graph nodes directly
_SIMPLE_STMTS = (
    NodeType.DECL_STMT,
    NodeType.EXPR_STMT,
    NodeType.RETURN,
    NodeType.BREAK,
    NodeType.CONTINUE,
    NodeType.GOTO,
)


@dataclass
class GraphNode:
    id: int
    label: str
    tokens: list[str] = field(default_factory=list)


@dataclass
class CodeGraph:
    nodes: list[GraphNode]
    adjacency: np.ndarray  # bool, (len(EdgeType), m, m), row = source
    entry_id: int
    exit_id: int

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def edges(self, kind: EdgeType) -> list[tuple[int, int]]:
        src, dst = np.nonzero(self.adjacency[kind])
        return list(zip(src.tolist(), dst.tolist()))


def _for_parts(node: AstNode):
    """(init, cond, update, body) of a For; any of the first three may be None."""
    init = cond = update = None
    for kid in node.children[:-1]:
        if kid.node_type == NodeType.CONDITION:
            cond = kid
        elif kid.node_type == NodeType.EXPR_STMT and kid.attr == "for-update":
            update = kid
        else:
            init = kid
    return init, cond, update, node.children[-1]


class _FlowBuilder:
    def __init__(self, fn: AstNode, entry_id: int, exit_id: int):
        self.fn = fn
        self.entry_id = entry_id
        self.exit_id = exit_id
        self.edges: list[tuple[int, int]] = []
        self.labels: dict[str, int] = {}
        self.gotos: list[tuple[int, str]] = []

    def connect(self, frontier: list[int], target: int) -> None:
        for src in frontier:
            self.edges.append((src, target))

    def first_of(self, node: AstNode) -> int | None:
        t = node.node_type
        if t in _SIMPLE_STMTS or t == NodeType.LABEL:
            return node.id
        if t == NodeType.BLOCK:
            for s in node.children:
                f = self.first_of(s)
                if f is not None:
                    return f
            return None
        if t in (NodeType.IF, NodeType.WHILE):
            return node.children[0].id
        if t == NodeType.FOR:
            init, cond, update, body = _for_parts(node)
            for part in (init, cond):
                if part is not None:
                    return part.id
            return self.first_of(body) or (update.id if update else None)
        return None

    def stmt(self, node: AstNode, frontier: list[int], loop: tuple[list[int], list[int]] | None):
        """Wire one statement; returns the fall-through frontier."""
        t = node.node_type
        if t in (NodeType.DECL_STMT, NodeType.EXPR_STMT):
            self.connect(frontier, node.id)
            return [node.id]
        if t == NodeType.BLOCK:
            for s in node.children:
                frontier = self.stmt(s, frontier, loop)
            return frontier
        if t == NodeType.RETURN:
            self.connect(frontier, node.id)
            self.edges.append((node.id, self.exit_id))
            return []
        if t == NodeType.BREAK:
            self.connect(frontier, node.id)
            if loop is None:
                raise AnalysisError("break outside any loop")
            loop[0].append(node.id)
            return []
        if t == NodeType.CONTINUE:
            self.connect(frontier, node.id)
            if loop is None:
                raise AnalysisError("continue outside any loop")
            loop[1].append(node.id)
            return []
        if t == NodeType.GOTO:
            self.connect(frontier, node.id)
            self.gotos.append((node.id, node.attr or ""))
            return []
        if t == NodeType.LABEL:
            name = node.attr or ""
            if name in self.labels:
                raise AnalysisError(f"duplicate label {name!r}")
            self.labels[name] = node.id
            self.connect(frontier, node.id)
            return self.stmt(node.children[0], [node.id], loop)
        if t == NodeType.IF:
            cond = node.children[0]
            self.connect(frontier, cond.id)
            out = self.stmt(node.children[1], [cond.id], loop)
            if len(node.children) == 3:
                out = out + self.stmt(node.children[2], [cond.id], loop)
            else:
                out = out + [cond.id]
            return out
        if t == NodeType.WHILE:
            cond = node.children[0]
            self.connect(frontier, cond.id)
            inner: tuple[list[int], list[int]] = ([], [])
            body_out = self.stmt(node.children[1], [cond.id], inner)
            self.connect(body_out + inner[1], cond.id)
            return [cond.id] + inner[0]
        if t == NodeType.FOR:
            return self._for(node, frontier)
        raise AnalysisError(f"unexpected statement node {t.value}")

    def _for(self, node: AstNode, frontier: list[int]) -> list[int]:
        init, cond, update, body = _for_parts(node)
        if init is not None:
            self.connect(frontier, init.id)
            frontier = [init.id]
        inner: tuple[list[int], list[int]] = ([], [])
        if cond is not None:
            self.connect(frontier, cond.id)
            body_out = self.stmt(body, [cond.id], inner)
            back = cond.id
        else:
            # no condition: loop body follows the header directly
            head = self.first_of(body) or (update.id if update else None)
            if head is None:
                return inner[0]
            body_out = self.stmt(body, frontier, inner)
            back = head
        if update is not None:
            self.connect(body_out + inner[1], update.id)
            self.edges.append((update.id, back))
        else:
            self.connect(body_out + inner[1], back)
        return ([cond.id] if cond is not None else []) + inner[0]

    def build(self) -> list[tuple[int, int]]:
        body = self.fn.children[1]
        out = self.stmt(body, [self.entry_id], None)
        self.connect(out, self.exit_id)
        for src, name in self.gotos:
            if name not in self.labels:
                raise AnalysisError(f"goto to undefined label {name!r}")
            self.edges.append((src, self.labels[name]))
        seen = set()
        uniq = []
        for e in self.edges:
            if e not in seen:
                seen.add(e)
                uniq.append(e)
        return uniq


def build_cfg(fn: AstNode) -> tuple[list[tuple[int, int]], int, int]:
    """Statement-level flow edges plus the synthetic entry/exit ids."""
    if fn.node_type != NodeType.FUNCTION:
        raise AnalysisError("flow graph needs a Function root")
    n = sum(1 for _ in fn.walk())
    entry_id, exit_id = n, n + 1
    edges = _FlowBuilder(fn, entry_id, exit_id).build()
    return edges, entry_id, exit_id


def _expr_def_use(node: AstNode, defs: list, uses: list) -> None:
    t = node.node_type
    if t == NodeType.IDENTIFIER:
        uses.append((node.attr or "", node.id))
        return
    if t == NodeType.LITERAL:
        return
    if t == NodeType.ASSIGN:
        lhs, rhs = node.children
        _expr_def_use(rhs, defs, uses)
        if lhs.node_type == NodeType.IDENTIFIER:
            if node.attr != "=":  # compound assignment reads the old value
                uses.append((lhs.attr or "", lhs.id))
            defs.append((lhs.attr or "", lhs.id))
        else:
            # a store through a member/index/deref reads the base, defines nothing
            _expr_def_use(lhs, defs, uses)
        return
    if t == NodeType.UNARY_OP:
        operand = node.children[0]
        if node.attr in ("++", "--") and operand.node_type == NodeType.IDENTIFIER:
            uses.append((operand.attr or "", operand.id))
            defs.append((operand.attr or "", operand.id))
            return
        _expr_def_use(operand, defs, uses)
        return
    if t == NodeType.BINARY_OP and node.attr in (".", "->"):
        _expr_def_use(node.children[0], defs, uses)  # field name is not a variable
        return
    if t == NodeType.CALL:
        callee = node.children[0]
        if callee.node_type != NodeType.IDENTIFIER:  # callee names are code, not data
            _expr_def_use(callee, defs, uses)
        for arg in node.children[1:]:
            _expr_def_use(arg, defs, uses)
        return
    for kid in node.children:
        _expr_def_use(kid, defs, uses)


def statement_def_use(fn: AstNode) -> DefUse:
    """Per flow-node defs and uses: (variable name, identifier node id) pairs.

    Statements own their expression subtrees; if/while/for conditions are their
    own flow nodes and own only the condition expression.
    """
    table: DefUse = {}

    def record(stmt_id: int, exprs: list[AstNode], decls: list[AstNode] | None = None):
        defs: list[tuple[str, int]] = []
        uses: list[tuple[str, int]] = []
        for d in decls or []:
            if d.node_type == NodeType.ASSIGN:
                _expr_def_use(d.children[1], defs, uses)
                defs.append((d.children[0].attr or "", d.children[0].id))
            else:
                defs.append((d.attr or "", d.id))
        for e in exprs:
            _expr_def_use(e, defs, uses)
        table[stmt_id] = (defs, uses)

    for node in fn.walk():
        t = node.node_type
        if t == NodeType.DECL_STMT:
            record(node.id, [], node.children)
        elif t == NodeType.EXPR_STMT:
            record(node.id, node.children)
        elif t == NodeType.RETURN:
            record(node.id, node.children)
        elif t == NodeType.CONDITION:
            record(node.id, node.children)
        elif t in (NodeType.BREAK, NodeType.CONTINUE, NodeType.GOTO, NodeType.LABEL):
            record(node.id, [])
    return table


def reaching_definitions(
    flow_edges: list[tuple[int, int]],
    def_use: DefUse,
    entry_id: int,
) -> list[tuple[int, int, str]]:
    """Forward may-analysis; returns (def stmt, use stmt, variable) triples.

    Works on any statement graph, so tests can feed synthetic flows. The
    fixpoint is round-robin with a sweep bound of nodes x definitions + 2.
    """
    nodes = sorted({entry_id} | {s for e in flow_edges for s in e} | set(def_use))
    preds: dict[int, list[int]] = {u: [] for u in nodes}
    for s, d in flow_edges:
        preds.setdefault(d, []).append(s)
    gen: dict[int, frozenset] = {}
    kill_names: dict[int, frozenset] = {}
    for u in nodes:
        defs, _ = def_use.get(u, ([], []))
        names = frozenset(name for name, _ in defs)
        gen[u] = frozenset((u, name) for name in names)
        kill_names[u] = names
    total_defs = sum(len(g) for g in gen.values())
    bound = len(nodes) * max(1, total_defs) + 2
    out: dict[int, frozenset] = {u: frozenset() for u in nodes}
    in_: dict[int, frozenset] = {u: frozenset() for u in nodes}
    for sweep in range(bound):
        changed = False
        for u in nodes:
            new_in = frozenset().union(*(out[p] for p in preds.get(u, []))) if preds.get(u) else frozenset()
            new_out = gen[u] | frozenset(
                (d, name) for d, name in new_in if name not in kill_names[u]
            )
            if new_in != in_[u] or new_out != out[u]:
                in_[u], out[u] = new_in, new_out
                changed = True
        if not changed:
            break
    else:
        raise AnalysisError("reaching definitions failed to converge within bound")
    triples = set()
    for u in nodes:
        _, uses = def_use.get(u, ([], []))
        use_names = {name for name, _ in uses}
        for d, name in in_[u]:
            if name in use_names:
                triples.add((d, u, name))
    return sorted(triples)


def control_dependence(fn: AstNode) -> list[tuple[int, int]]:
    """(condition node, dependent flow node) pairs under the innermost-predicate rule."""
    edges: list[tuple[int, int]] = []

    def dep(ctrl: int | None, node_id: int):
        if ctrl is not None:
            edges.append((ctrl, node_id))

    def walk(node: AstNode, ctrl: int | None):
        t = node.node_type
        if t in _SIMPLE_STMTS:
            dep(ctrl, node.id)
        elif t == NodeType.LABEL:
            dep(ctrl, node.id)
            walk(node.children[0], ctrl)
        elif t == NodeType.BLOCK:
            for s in node.children:
                walk(s, ctrl)
        elif t == NodeType.IF:
            cond = node.children[0]
            dep(ctrl, cond.id)
            walk(node.children[1], cond.id)
            if len(node.children) == 3:
                walk(node.children[2], cond.id)
        elif t == NodeType.WHILE:
            cond = node.children[0]
            dep(ctrl, cond.id)
            walk(node.children[1], cond.id)
        elif t == NodeType.FOR:
            init, cond, update, body = _for_parts(node)
            if init is not None:
                dep(ctrl, init.id)
            inner = ctrl
            if cond is not None:
                dep(ctrl, cond.id)
                inner = cond.id
            if update is not None:
                dep(inner, update.id)
            walk(body, inner)

    walk(fn.children[1], None)
    return sorted(set(edges))


def define_use_edges(def_use: DefUse) -> list[tuple[int, int, EdgeType]]:
    """Statement-to-identifier-occurrence edges for writes and reads."""
    out = set()
    for stmt_id, (defs, uses) in def_use.items():
        for _, ident_id in defs:
            out.add((stmt_id, ident_id, EdgeType.DEFINE))
        for _, ident_id in uses:
            out.add((stmt_id, ident_id, EdgeType.USE))
    return sorted(out)


def build_cpg(fn: AstNode) -> CodeGraph:
    """Assemble the full graph for one parsed function."""
    ast_nodes = list(fn.walk())
    flow_edges, entry_id, exit_id = build_cfg(fn)
    def_use = statement_def_use(fn)
    reach = reaching_definitions(flow_edges, def_use, entry_id)
    control = control_dependence(fn)
    du = define_use_edges(def_use)

    m = len(ast_nodes) + 2
    nodes = [
        GraphNode(n.id, n.node_type.value, [t.text for t in n.subseq]) for n in ast_nodes
    ]
    nodes.append(GraphNode(entry_id, ENTRY_LABEL, []))
    nodes.append(GraphNode(exit_id, EXIT_LABEL, []))

    adj = np.zeros((len(EdgeType), m, m), dtype=bool)
    for parent in ast_nodes:
        for child in parent.children:
            adj[EdgeType.AST, parent.id, child.id] = True
    for s, d in flow_edges:
        adj[EdgeType.FLOW_TO, s, d] = True
    for d, u, _name in reach:
        adj[EdgeType.REACH, d, u] = True
    for c, s in control:
        adj[EdgeType.CONTROL, c, s] = True
    for s, ident, kind in du:
        adj[kind, s, ident] = True
    for k in range(len(EdgeType)):  # no self-loops in any plane
        np.fill_diagonal(adj[k], False)
    return CodeGraph(nodes=nodes, adjacency=adj, entry_id=entry_id, exit_id=exit_id)


def graph_from_source(source: str) -> CodeGraph:
    from .frontend import parse_source

    return build_cpg(parse_source(source))


def _sorted_edge_list(graph: CodeGraph) -> list[tuple[str, int, int]]:
    out = []
    for kind in EdgeType:
        for s, d in graph.edges(kind):
            out.append((EDGE_LABELS[kind], s, d))
    out.sort(key=lambda e: (_LABEL_TO_EDGE[e[0]], e[1], e[2]))
    return out


def to_dot(graph: CodeGraph) -> str:
    """Deterministic edge-labeled DOT rendering."""

    def esc(s: str) -> str:
        return s.replace("\\", "\\\\").replace('"', '\\"')

    lines = ["digraph cpg {"]
    for n in graph.nodes:
        text = " ".join(n.tokens)
        label = n.label if not text else f"{n.label}\\n{esc(text)}"
        lines.append(f'  n{n.id} [label="{label}"];')
    for label, s, d in _sorted_edge_list(graph):
        lines.append(f'  n{s} -> n{d} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(graph: CodeGraph) -> str:
    doc = {
        "entry": graph.entry_id,
        "exit": graph.exit_id,
        "nodes": [
            {"id": n.id, "label": n.label, "tokens": n.tokens} for n in graph.nodes
        ],
        "edges": [
            {"type": label, "src": s, "dst": d} for label, s, d in _sorted_edge_list(graph)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def from_json(text: str) -> CodeGraph:
    doc = json.loads(text)
    node_docs = sorted(doc["nodes"], key=lambda n: n["id"])
    nodes = [GraphNode(n["id"], n["label"], list(n["tokens"])) for n in node_docs]
    m = len(nodes)
    adj = np.zeros((len(EdgeType), m, m), dtype=bool)
    for e in doc["edges"]:
        adj[_LABEL_TO_EDGE[e["type"]], e["src"], e["dst"]] = True
    return CodeGraph(nodes=nodes, adjacency=adj, entry_id=doc["entry"], exit_id=doc["exit"])

"""Lexer and recursive-descent parser for the C subset the pipeline consumes.

One translation unit is one function definition. The grammar covers scalar and
pointer declarations, if/while/for, break/continue/goto/labels, calls, member
and index access, and the usual unary/binary operators. No preprocessor, no
structs beyond member access, no function pointers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import LexError, ParseError


class TokenKind(Enum):
    IDENT = "ident"
    KEYWORD = "keyword"
    NUMBER = "number"
    STRING = "string"
    CHAR = "char"
    OP = "op"
    PUNCT = "punct"


KEYWORDS = frozenset(
    """if else while for return break continue goto
       void int char short long unsigned signed float double const struct static""".split()
)

TYPE_WORDS = frozenset(
    "void int char short long unsigned signed float double const struct static".split()
)

# longest first so maximal munch falls out of the scan order
OPERATORS = (
    "->", "++", "--", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", ".",
)

PUNCT = frozenset("(){}[];,:")

ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%="})


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    span: tuple[int, int]


def tokenize(source: str) -> list[Token]:
    """Scan source into tokens; spans index the original string.

    Comments and whitespace are skipped. Raises LexError (with offset) on
    unterminated comments/strings and on characters outside the language.
    """
    tokens: list[Token] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n\f\v":
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated block comment", i)
            i = j + 2
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT
            tokens.append(Token(kind, text, (i, j)))
            i = j
            continue
        if ch.isdigit():
            j = i + 1
            if ch == "0" and j < n and source[j] in "xX":
                j += 1
                while j < n and source[j] in "0123456789abcdefABCDEF":
                    j += 1
            else:
                while j < n and source[j].isdigit():
                    j += 1
                if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                    j += 1
                    while j < n and source[j].isdigit():
                        j += 1
                if j < n and source[j] in "eE":
                    k = j + 1
                    if k < n and source[k] in "+-":
                        k += 1
                    if k < n and source[k].isdigit():
                        j = k
                        while j < n and source[j].isdigit():
                            j += 1
            tokens.append(Token(TokenKind.NUMBER, source[i:j], (i, j)))
            i = j
            continue
        if ch in "\"'":
            j = i + 1
            while j < n and source[j] != ch:
                j += 2 if source[j] == "\\" else 1
            if j >= n:
                raise LexError("unterminated literal", i)
            kind = TokenKind.STRING if ch == '"' else TokenKind.CHAR
            tokens.append(Token(kind, source[i : j + 1], (i, j + 1)))
            i = j + 1
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token(TokenKind.OP, op, (i, i + len(op))))
                i += len(op)
                break
        else:
            if ch in PUNCT:
                tokens.append(Token(TokenKind.PUNCT, ch, (i, i + 1)))
                i += 1
            else:
                raise LexError(f"unexpected character {ch!r}", i)
    return tokens


def subtoken_split(text: str) -> list[str]:
    """Split an identifier on underscores, camelCase humps, and digit runs.

    Everything comes back lowercased; "pdcTodSet_v2" -> [pdc, tod, set, v, 2].
    """
    parts: list[str] = []
    word = ""
    prev = ""
    for ch in text:
        boundary = (
            ch == "_"
            or (ch.isupper() and (prev.islower() or prev.isdigit()))
            or (ch.isdigit() != prev.isdigit() and prev != "")
        )
        if boundary and word:
            parts.append(word)
            word = ""
        if ch != "_":
            word += ch
        prev = "" if ch == "_" else ch
    if word:
        parts.append(word)
    # split trailing ALLCAPS runs glued to a capitalized word: HTTPCode -> HTTP, Code
    out: list[str] = []
    for p in parts:
        run = ""
        for k, ch in enumerate(p):
            if run and ch.islower() and run[-1].isupper() and len(run) > 1 and run[:-1].isupper():
                out.append(run[:-1])
                run = run[-1]
            run += ch
        if run:
            out.append(run)
    return [p.lower() for p in out if p]


def expand_identifier_tokens(texts: Iterable[str]) -> list[str]:
    """Expand identifier-looking token texts into subtokens, pass others through.

    Keywords and anything that does not start like an identifier (numbers,
    operators, string literals) stay as single tokens.
    """
    out: list[str] = []
    for text in texts:
        if text and (text[0].isalpha() or text[0] == "_") and text not in KEYWORDS:
            out.extend(subtoken_split(text))
        else:
            out.append(text)
    return out


class NodeType(Enum):
    FUNCTION = "Function"
    PARAM_LIST = "ParamList"
    BLOCK = "Block"
    DECL_STMT = "DeclStmt"
    EXPR_STMT = "ExprStmt"
    IF = "If"
    WHILE = "While"
    FOR = "For"
    RETURN = "Return"
    BREAK = "Break"
    CONTINUE = "Continue"
    GOTO = "Goto"
    LABEL = "Label"
    CALL = "Call"
    BINARY_OP = "BinaryOp"
    UNARY_OP = "UnaryOp"
    ASSIGN = "Assign"
    IDENTIFIER = "Identifier"
    LITERAL = "Literal"
    CONDITION = "Condition"


@dataclass
class AstNode:
    """AST node; ids are dense preorder indices assigned by parse().

    attr carries the salient text (operator, identifier name, literal text,
    label name); ctype the declared type where one applies; postfix marks
    postfix ++/--.
    """

    node_type: NodeType
    children: list["AstNode"] = field(default_factory=list)
    subseq: list[Token] = field(default_factory=list)
    id: int = -1
    attr: str | None = None
    ctype: str | None = None
    postfix: bool = False

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def _span(self) -> tuple[int, int]:
        if self.pos < len(self.toks):
            return self.toks[self.pos].span
        if self.toks:
            end = self.toks[-1].span[1]
            return (end, end)
        return (0, 0)

    def peek(self, ahead: int = 0) -> Token | None:
        k = self.pos + ahead
        return self.toks[k] if k < len(self.toks) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text

    def at_kind(self, kind: TokenKind) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", ("<any>",), self._span())
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t is None or t.text != text:
            got = t.text if t else "<eof>"
            raise ParseError(f"got {got!r}", (text,), self._span())
        return self.advance()

    def expect_ident(self) -> Token:
        t = self.peek()
        if t is None or t.kind != TokenKind.IDENT:
            got = t.text if t else "<eof>"
            raise ParseError(f"got {got!r}", ("<identifier>",), self._span())
        return self.advance()

    def at_type(self) -> bool:
        t = self.peek()
        return t is not None and t.kind == TokenKind.KEYWORD and t.text in TYPE_WORDS

    # --- declarations -----------------------------------------------------

    def parse_type(self) -> str:
        words = []
        if not self.at_type():
            raise ParseError("expected a type", ("<type>",), self._span())
        while self.at_type():
            tok = self.advance()
            words.append(tok.text)
            if tok.text == "struct":
                words.append(self.expect_ident().text)
        return " ".join(words)

    def parse_function(self) -> AstNode:
        start = self.pos
        ctype = self.parse_type()
        name = self.expect_ident()
        self.expect("(")
        pstart = self.pos - 1
        params: list[AstNode] = []
        nxt = self.peek(1)
        if self.at("void") and nxt is not None and nxt.text == ")":
            self.advance()
        elif not self.at(")"):
            while True:
                ptype = self.parse_type()
                stars = ""
                while self.at("*"):
                    self.advance()
                    stars += "*"
                pident = self.expect_ident()
                params.append(
                    AstNode(
                        NodeType.IDENTIFIER,
                        subseq=[pident],
                        attr=pident.text,
                        ctype=ctype_join(ptype, stars),
                    )
                )
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        plist = AstNode(NodeType.PARAM_LIST, children=params, subseq=self.toks[pstart : self.pos])
        body = self.parse_block()
        node = AstNode(
            NodeType.FUNCTION,
            children=[plist, body],
            subseq=self.toks[start : self.pos],
            attr=name.text,
            ctype=ctype,
        )
        return node

    def parse_block(self) -> AstNode:
        start = self.pos
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unterminated block", ("}",), self._span())
            stmts.append(self.parse_stmt())
        self.expect("}")
        return AstNode(NodeType.BLOCK, children=stmts, subseq=self.toks[start : self.pos])

    def parse_decl(self, consume_semi: bool = True) -> AstNode:
        start = self.pos
        ctype = self.parse_type()
        decls: list[AstNode] = []
        while True:
            stars = ""
            while self.at("*"):
                self.advance()
                stars += "*"
            ident_tok = self.expect_ident()
            ident = AstNode(
                NodeType.IDENTIFIER,
                subseq=[ident_tok],
                attr=ident_tok.text,
                ctype=ctype_join("", stars) or None,
            )
            if self.at("="):
                estart = self.pos - 1
                self.advance()
                init = self.parse_assign()
                decls.append(
                    AstNode(
                        NodeType.ASSIGN,
                        children=[ident, init],
                        subseq=self.toks[estart : self.pos],
                        attr="=",
                    )
                )
            else:
                decls.append(ident)
            if not self.at(","):
                break
            self.advance()
        if consume_semi:
            self.expect(";")
        return AstNode(
            NodeType.DECL_STMT, children=decls, subseq=self.toks[start : self.pos], ctype=ctype
        )

    # --- statements -------------------------------------------------------

    def parse_stmt(self) -> AstNode:
        start = self.pos
        tok = self.peek()
        if tok is None:
            raise ParseError("expected a statement", ("<statement>",), self._span())
        if tok.text == "{":
            return self.parse_block()
        if self.at_type():
            return self.parse_decl()
        if tok.text == "if":
            return self.parse_if()
        if tok.text == "while":
            return self.parse_while()
        if tok.text == "for":
            return self.parse_for()
        if tok.text == "return":
            self.advance()
            kids = []
            if not self.at(";"):
                kids.append(self.parse_expr())
            self.expect(";")
            return AstNode(NodeType.RETURN, children=kids, subseq=self.toks[start : self.pos])
        if tok.text in ("break", "continue"):
            self.advance()
            self.expect(";")
            nt = NodeType.BREAK if tok.text == "break" else NodeType.CONTINUE
            return AstNode(nt, subseq=self.toks[start : self.pos])
        if tok.text == "goto":
            self.advance()
            target = self.expect_ident()
            self.expect(";")
            return AstNode(
                NodeType.GOTO, subseq=self.toks[start : self.pos], attr=target.text
            )
        if tok.kind == TokenKind.IDENT and (nxt := self.peek(1)) and nxt.text == ":":
            self.advance()
            self.advance()
            inner = self.parse_stmt()
            return AstNode(
                NodeType.LABEL,
                children=[inner],
                subseq=self.toks[start : self.pos],
                attr=tok.text,
            )
        expr = self.parse_expr()
        self.expect(";")
        return AstNode(NodeType.EXPR_STMT, children=[expr], subseq=self.toks[start : self.pos])

    def _condition(self) -> AstNode:
        start = self.pos
        expr = self.parse_expr()
        return AstNode(NodeType.CONDITION, children=[expr], subseq=self.toks[start : self.pos])

    def parse_if(self) -> AstNode:
        start = self.pos
        self.expect("if")
        self.expect("(")
        cond = self._condition()
        self.expect(")")
        then = self.parse_stmt()
        kids = [cond, then]
        if self.at("else"):
            self.advance()
            kids.append(self.parse_stmt())
        return AstNode(NodeType.IF, children=kids, subseq=self.toks[start : self.pos])

    def parse_while(self) -> AstNode:
        start = self.pos
        self.expect("while")
        self.expect("(")
        cond = self._condition()
        self.expect(")")
        body = self.parse_stmt()
        return AstNode(NodeType.WHILE, children=[cond, body], subseq=self.toks[start : self.pos])

    def parse_for(self) -> AstNode:
        """for (init; cond; update) body, every header slot optional.

        Children, in order: [init?] [Condition?] [update-as-ExprStmt?] body;
        the update expression is wrapped in a synthetic ExprStmt so the flow
        graph can treat it as a statement.
        """
        start = self.pos
        self.expect("for")
        self.expect("(")
        kids: list[AstNode] = []
        if self.at_type():
            kids.append(self.parse_decl())
        elif not self.at(";"):
            estart = self.pos
            expr = self.parse_expr()
            self.expect(";")
            kids.append(
                AstNode(NodeType.EXPR_STMT, children=[expr], subseq=self.toks[estart : self.pos])
            )
        else:
            self.expect(";")
        if not self.at(";"):
            kids.append(self._condition())
        self.expect(";")
        if not self.at(")"):
            ustart = self.pos
            expr = self.parse_expr()
            kids.append(
                AstNode(
                    NodeType.EXPR_STMT,
                    children=[expr],
                    subseq=self.toks[ustart : self.pos],
                    attr="for-update",
                )
            )
        self.expect(")")
        kids.append(self.parse_stmt())
        return AstNode(NodeType.FOR, children=kids, subseq=self.toks[start : self.pos])

    # --- expressions --------------------------------------------------------

    def parse_expr(self) -> AstNode:
        return self.parse_assign()

    def parse_assign(self) -> AstNode:
        start = self.pos
        left = self.parse_binary(0)
        t = self.peek()
        if t is not None and t.text in ASSIGN_OPS:
            op = self.advance().text
            right = self.parse_assign()
            return AstNode(
                NodeType.ASSIGN,
                children=[left, right],
                subseq=self.toks[start : self.pos],
                attr=op,
            )
        return left

    _LEVELS = (("||",), ("&&",), ("==", "!="), ("<", ">", "<=", ">="), ("+", "-"), ("*", "/", "%"))

    def parse_binary(self, level: int) -> AstNode:
        if level >= len(self._LEVELS):
            return self.parse_unary()
        start = self.pos
        node = self.parse_binary(level + 1)
        while (t := self.peek()) is not None and t.text in self._LEVELS[level]:
            op = self.advance().text
            rhs = self.parse_binary(level + 1)
            node = AstNode(
                NodeType.BINARY_OP,
                children=[node, rhs],
                subseq=self.toks[start : self.pos],
                attr=op,
            )
        return node

    def parse_unary(self) -> AstNode:
        start = self.pos
        t = self.peek()
        if t is not None and t.text in ("!", "-", "++", "--", "&", "*"):
            op = self.advance().text
            operand = self.parse_unary()
            return AstNode(
                NodeType.UNARY_OP,
                children=[operand],
                subseq=self.toks[start : self.pos],
                attr=op,
            )
        return self.parse_postfix()

    def parse_postfix(self) -> AstNode:
        start = self.pos
        node = self.parse_primary()
        while (t := self.peek()) is not None:
            if t.text == "(":
                self.advance()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_assign())
                        if not self.at(","):
                            break
                        self.advance()
                self.expect(")")
                node = AstNode(
                    NodeType.CALL, children=[node] + args, subseq=self.toks[start : self.pos]
                )
            elif t.text == "[":
                self.advance()
                idx = self.parse_expr()
                self.expect("]")
                node = AstNode(
                    NodeType.BINARY_OP,
                    children=[node, idx],
                    subseq=self.toks[start : self.pos],
                    attr="[]",
                )
            elif t.text in (".", "->"):
                op = self.advance().text
                fld = self.expect_ident()
                field_node = AstNode(NodeType.IDENTIFIER, subseq=[fld], attr=fld.text)
                node = AstNode(
                    NodeType.BINARY_OP,
                    children=[node, field_node],
                    subseq=self.toks[start : self.pos],
                    attr=op,
                )
            elif t.text in ("++", "--"):
                self.advance()
                node = AstNode(
                    NodeType.UNARY_OP,
                    children=[node],
                    subseq=self.toks[start : self.pos],
                    attr=t.text,
                    postfix=True,
                )
            else:
                break
        return node

    def parse_primary(self) -> AstNode:
        t = self.peek()
        if t is None:
            raise ParseError("expected an expression", ("<expression>",), self._span())
        if t.text == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if t.kind == TokenKind.IDENT:
            self.advance()
            return AstNode(NodeType.IDENTIFIER, subseq=[t], attr=t.text)
        if t.kind in (TokenKind.NUMBER, TokenKind.STRING, TokenKind.CHAR):
            self.advance()
            return AstNode(NodeType.LITERAL, subseq=[t], attr=t.text)
        raise ParseError(
            f"got {t.text!r}", ("<identifier>", "<literal>", "("), self._span()
        )


def ctype_join(base: str, stars: str) -> str:
    return f"{base} {stars}".strip() if stars else base


def parse(tokens: list[Token]) -> AstNode:
    """Parse exactly one function definition; assigns dense preorder ids."""
    p = _Parser(tokens)
    fn = p.parse_function()
    if p.peek() is not None:
        raise ParseError("trailing input after function", ("<eof>",), p._span())
    for i, node in enumerate(fn.walk()):
        node.id = i
    return fn


def parse_source(source: str) -> AstNode:
    return parse(tokenize(source))


def pretty_print(node: AstNode) -> str:
    """Render a parse tree back to compilable text.

    Expressions come back fully parenthesized; reparsing yields an isomorphic
    tree because parentheses never create nodes.
    """
    return _pp(node)


def _pp_expr(n: AstNode) -> str:
    t = n.node_type
    if t == NodeType.IDENTIFIER:
        return n.attr or ""
    if t == NodeType.LITERAL:
        return n.attr or ""
    if t == NodeType.ASSIGN:
        return f"( {_pp_expr(n.children[0])} {n.attr} {_pp_expr(n.children[1])} )"
    if t == NodeType.BINARY_OP:
        if n.attr == "[]":
            return f"( {_pp_expr(n.children[0])} [ {_pp_expr(n.children[1])} ] )"
        if n.attr in (".", "->"):
            return f"( {_pp_expr(n.children[0])} {n.attr} {n.children[1].attr} )"
        return f"( {_pp_expr(n.children[0])} {n.attr} {_pp_expr(n.children[1])} )"
    if t == NodeType.UNARY_OP:
        if n.postfix:
            return f"( {_pp_expr(n.children[0])} {n.attr} )"
        return f"( {n.attr} {_pp_expr(n.children[0])} )"
    if t == NodeType.CALL:
        args = " , ".join(_pp_expr(a) for a in n.children[1:])
        return f"{_pp_expr(n.children[0])} ( {args} )"
    if t == NodeType.CONDITION:
        return _pp_expr(n.children[0])
    raise ValueError(f"not an expression node: {t}")


def _pp_declarator(d: AstNode) -> str:
    if d.node_type == NodeType.ASSIGN:
        ident = d.children[0]
        stars = (ident.ctype or "") + " " if ident.ctype else ""
        return f"{stars}{ident.attr} = {_pp_expr(d.children[1])}"
    stars = (d.ctype or "") + " " if d.ctype else ""
    return f"{stars}{d.attr}"


def _pp(n: AstNode) -> str:
    t = n.node_type
    if t == NodeType.FUNCTION:
        plist, body = n.children
        params = " , ".join(f"{p.ctype} {p.attr}" for p in plist.children)
        return f"{n.ctype} {n.attr} ( {params} ) {_pp(body)}"
    if t == NodeType.BLOCK:
        inner = " ".join(_pp(s) for s in n.children)
        return "{ " + inner + " }" if inner else "{ }"
    if t == NodeType.DECL_STMT:
        decls = " , ".join(_pp_declarator(d) for d in n.children)
        return f"{n.ctype} {decls} ;"
    if t == NodeType.EXPR_STMT:
        return f"{_pp_expr(n.children[0])} ;"
    if t == NodeType.IF:
        out = f"if ( {_pp_expr(n.children[0])} ) {_pp(n.children[1])}"
        if len(n.children) == 3:
            out += f" else {_pp(n.children[2])}"
        return out
    if t == NodeType.WHILE:
        return f"while ( {_pp_expr(n.children[0])} ) {_pp(n.children[1])}"
    if t == NodeType.FOR:
        init = cond = update = ""
        body = n.children[-1]
        for kid in n.children[:-1]:
            if kid.node_type == NodeType.CONDITION:
                cond = _pp_expr(kid)
            elif kid.node_type == NodeType.EXPR_STMT and kid.attr == "for-update":
                update = _pp_expr(kid.children[0])
            else:
                init = _pp(kid)
        if not init:
            init = ";"
        return f"for ( {init} {cond} ; {update} ) {_pp(body)}"
    if t == NodeType.RETURN:
        if n.children:
            return f"return {_pp_expr(n.children[0])} ;"
        return "return ;"
    if t == NodeType.BREAK:
        return "break ;"
    if t == NodeType.CONTINUE:
        return "continue ;"
    if t == NodeType.GOTO:
        return f"goto {n.attr} ;"
    if t == NodeType.LABEL:
        return f"{n.attr} : {_pp(n.children[0])}"
    return _pp_expr(n) + " ;"

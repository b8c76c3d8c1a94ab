"""Recursive-descent parser for a small Java-like language, and AST graphs.

Grammar (one class per source)::

    program    := 'class' IDENT '{' member* '}'
    member     := IDENT IDENT ( '(' params? ')' block | ('=' expr)? ';' )
    params     := IDENT IDENT (',' IDENT IDENT)*
    block      := '{' stmt* '}'
    stmt       := block | 'if' '(' expr ')' stmt ('else' stmt)?
                | 'while' '(' expr ')' stmt | 'return' expr? ';'
                | IDENT IDENT ('=' expr)? ';' | expr ('=' expr)? ';'
    expr       := rel (('==' | '!=') rel)*
    rel        := add (('<' | '>') add)*
    add        := mul (('+' | '-') mul)*
    mul        := postfix (('*' | '/') postfix)*
    postfix    := primary ('.' IDENT | '(' args? ')')*
    primary    := IDENT | INT | STRING | '(' expr ')'

Keywords, braces and separators do not become nodes. Operators do: a
``BinaryOp`` has children ``[left, op, right]``. Empty containers (an empty
block or parameter list) are omitted so every leaf carries source text.
"""

import json
import re
from collections import deque
from dataclasses import dataclass, field

from .errors import ParseError, SchemaError

KEYWORDS = {"class", "if", "else", "while", "return"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>==|!=|[-+*/<>=(){};,.])
    """,
    re.VERBOSE | re.DOTALL,
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")

# Loose lexer for arbitrary text (patch lines, labels); never fails.
_WORD_RE = re.compile(r'"(?:[^"\\\n]|\\.)*"|\w+|==|!=|\S')


def word_tokens(text):
    return _WORD_RE.findall(text)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src):
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class AstNode:
    label: str
    children: list = field(default_factory=list)
    id: int = -1
    depth: int = 0

    @property
    def child_ids(self):
        return [c.id for c in self.children]

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def size(self):
        return sum(1 for _ in self.walk())


def _number(root):
    """Assign preorder ids and depths in place."""
    counter = 0
    stack = [(root, 0)]
    while stack:
        node, depth = stack.pop()
        node.id = counter
        node.depth = depth
        counter += 1
        for child in reversed(node.children):
            stack.append((child, depth + 1))
    return root


def _node(label, *children):
    return AstNode(label, [c for c in children if c is not None])


class Parser:
    def __init__(self, src):
        self.tokens = tokenize(src)
        self.pos = 0

    @property
    def tok(self):
        return self.tokens[self.pos]

    def peek(self, k=1):
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def error(self, expected):
        t = self.tok
        got = t.text or "end of input"
        raise ParseError(f"unexpected {got!r}", t.line, t.col, expected)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def expect(self, text):
        if not self.at(text):
            self.error([text])
        self.pos += 1

    def ident(self):
        if self.tok.kind != "ident":
            self.error(["IDENT"])
        t = self.tok
        self.pos += 1
        return AstNode(t.text)

    def parse(self):
        root = self.class_decl()
        if self.tok.kind != "eof":
            self.error(["end of input"])
        return _number(root)

    def class_decl(self):
        self.expect("class")
        name = self.ident()
        self.expect("{")
        members = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error(["}", "IDENT"])
            members.append(self.member())
        self.expect("}")
        return _node("ClassDecl", name, *members)

    def member(self):
        type_ = self.ident()
        name = self.ident()
        if self.at("("):
            self.pos += 1
            params = self.params()
            self.expect(")")
            body = self.block()
            return _node("MethodDecl", type_, name, params, body)
        init = None
        if self.at("="):
            self.pos += 1
            init = self.expr()
        self.expect(";")
        return _node("FieldDecl", type_, name, init)

    def params(self):
        if self.at(")"):
            return None
        items = []
        while True:
            items.append(_node("Param", self.ident(), self.ident()))
            if not self.at(","):
                break
            self.pos += 1
        return _node("Params", *items)

    def block(self):
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error(["}"])
            stmt = self.statement()
            if stmt is not None:
                stmts.append(stmt)
        self.expect("}")
        return _node("Block", *stmts) if stmts else None

    def statement(self):
        t = self.tok
        if self.at("{"):
            return self.block()
        if self.at("if"):
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.statement()
            other = None
            if self.at("else"):
                self.pos += 1
                other = self.statement()
                other = _node("Else", other) if other is not None else None
            return _node("IfStmt", cond, then, other)
        if self.at("while"):
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return _node("WhileStmt", cond, self.statement())
        if self.at("return"):
            self.pos += 1
            if self.at(";"):
                self.pos += 1
                return _node("ReturnStmt", AstNode("return"))
            value = self.expr()
            self.expect(";")
            return _node("ReturnStmt", value)
        if t.kind == "ident" and self.peek().kind == "ident":
            type_ = self.ident()
            name = self.ident()
            init = None
            if self.at("="):
                self.pos += 1
                init = self.expr()
            self.expect(";")
            return _node("VarDecl", type_, name, init)
        if t.kind in ("ident", "int", "string") or self.at("("):
            target = self.expr()
            if self.at("="):
                assignable = target.label == "FieldAccess" or (
                    not target.children and _IDENT_RE.fullmatch(target.label)
                )
                if not assignable:
                    self.error([";"])
                self.pos += 1
                value = self.expr()
                self.expect(";")
                return _node("Assign", target, value)
            self.expect(";")
            return _node("ExprStmt", target)
        self.error(["statement"])

    def _binary(self, ops, operand):
        left = operand()
        while self.tok.kind == "op" and self.tok.text in ops:
            op = AstNode(self.tok.text)
            self.pos += 1
            left = _node("BinaryOp", left, op, operand())
        return left

    def expr(self):
        return self._binary(("==", "!="), self.rel)

    def rel(self):
        return self._binary(("<", ">"), self.add)

    def add(self):
        return self._binary(("+", "-"), self.mul)

    def mul(self):
        return self._binary(("*", "/"), self.postfix)

    def postfix(self):
        node = self.primary()
        while True:
            if self.at("."):
                self.pos += 1
                node = _node("FieldAccess", node, self.ident())
            elif self.at("("):
                self.pos += 1
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.pos += 1
                        args.append(self.expr())
                self.expect(")")
                node = _node("MethodCall", node, _node("Args", *args) if args else None)
            else:
                return node

    def primary(self):
        t = self.tok
        if t.kind in ("ident", "int", "string"):
            self.pos += 1
            return AstNode(t.text)
        if self.at("("):
            self.pos += 1
            inner = self.expr()
            self.expect(")")
            return inner
        self.error(["IDENT", "INT", "STRING", "("])


def parse_source(src):
    """Parse mini-language source into a numbered ``AstNode`` tree."""
    return Parser(src).parse()


class AstGraph:
    """Undirected labeled graph; each node carries ``(label, depth)``.

    Edges are stored as sorted id pairs, so ``(a, b)`` and ``(b, a)`` are the
    same edge.
    """

    def __init__(self, nodes=None, edges=()):
        self.nodes = dict(nodes or {})
        self.edges = set()
        for a, b in edges:
            self.add_edge(a, b)

    def add_node(self, node_id, label, depth):
        self.nodes[node_id] = (label, depth)

    def add_edge(self, a, b):
        if a == b:
            raise ValueError(f"self-loop on node {a}")
        if a not in self.nodes or b not in self.nodes:
            raise KeyError(f"edge ({a}, {b}) references a missing node")
        self.edges.add((a, b) if a < b else (b, a))

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        return isinstance(other, AstGraph) and self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self):
        return f"AstGraph(|V|={len(self.nodes)}, |E|={len(self.edges)})"

    def label(self, node_id):
        return self.nodes[node_id][0]

    def depth(self, node_id):
        return self.nodes[node_id][1]

    def adjacency(self):
        adj = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def labels(self):
        return [self.nodes[n][0] for n in sorted(self.nodes)]

    def copy(self):
        g = AstGraph()
        g.nodes = dict(self.nodes)
        g.edges = set(self.edges)
        return g

    def is_connected(self):
        if not self.nodes:
            return True
        adj = self.adjacency()
        start = min(self.nodes)
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return len(seen) == len(self.nodes)

    def to_json(self):
        return {
            "nodes": [{"id": n, "label": lab, "depth": d} for n, (lab, d) in sorted(self.nodes.items())],
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_json(cls, doc):
        try:
            nodes = {int(n["id"]): (str(n["label"]), int(n["depth"])) for n in doc["nodes"]}
            return cls(nodes, [(int(a), int(b)) for a, b in doc["edges"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad graph document: {exc}") from exc


def ast_to_graph(root):
    """One node per AST node, one undirected edge per parent/child pair."""
    g = AstGraph()
    for node in root.walk():
        g.add_node(node.id, node.label, node.depth)
    for node in root.walk():
        for child in node.children:
            g.add_edge(node.id, child.id)
    return g


def ast_to_json(root):
    return {"label": root.label, "children": [ast_to_json(c) for c in root.children]}


def _from_doc(doc, path):
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected an object")
    label = doc.get("label")
    if not isinstance(label, str):
        raise SchemaError(f"{path}: missing or non-string 'label'")
    children = doc.get("children", [])
    if not isinstance(children, list):
        raise SchemaError(f"{path}: 'children' must be a list")
    return AstNode(label, [_from_doc(c, f"{path}.children[{i}]") for i, c in enumerate(children)])


def ingest_external_ast(doc):
    """Build an ``AstGraph`` from the JSON AST format ``{"label", "children"}``.

    ``doc`` may be a parsed object or a JSON string.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    return ast_to_graph(_number(_from_doc(doc, "$")))


def bfs_depths(g, root=0):
    adj = g.adjacency()
    depths = {root: 0}
    queue = deque([root])
    while queue:
        n = queue.popleft()
        for nb in sorted(adj[n]):
            if nb not in depths:
                depths[nb] = depths[n] + 1
                queue.append(nb)
    return depths

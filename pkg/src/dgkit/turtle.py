"""Turtle subset parser and serializer.

Supported: ``@prefix``/``@base`` and their SPARQL-style forms, IRIs,
prefixed names, ``a``, string literals in all four quote styles with
language tags or datatypes, numeric and boolean shorthand, blank-node
labels, ``[]`` property lists, and ``;``/``,`` abbreviations.
Collections and quoted triples are rejected.
"""

from __future__ import annotations

import bisect
import re
from collections import defaultdict
from typing import Iterable, Optional
from urllib.parse import urljoin

from .terms import (
    RDF,
    STANDARD_PREFIXES,
    XSD,
    BlankNode,
    Iri,
    Literal,
    Quad,
    TermError,
    term_key,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


_PN_PREFIX = r"(?:[A-Za-zÀ-￿](?:[\w\-.]*[\w\-])?)?"
_PN_LOCAL_CHAR = r"(?:[\w\-:%]|\\[_~.\-!$&'()*+,;=/?#@%])"
_PN_LOCAL = rf"(?:(?:[\w:%]|\\[_~.\-!$&'()*+,;=/?#@%]){_PN_LOCAL_CHAR}*(?:\.+{_PN_LOCAL_CHAR}+)*)?"

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\r\n]*"),
    ("IRIREF", r"<[^<>\"{}|^`\\\x00-\x20]*>"),
    ("STRING_LONG2", r'"""(?:[^"\\]|\\.|"(?!""))*"""'),
    ("STRING_LONG1", r"'''(?:[^'\\]|\\.|'(?!''))*'''"),
    ("STRING2", r'"(?:[^"\\\n\r]|\\.)*"'),
    ("STRING1", r"'(?:[^'\\\n\r]|\\.)*'"),
    ("BNODE", r"_:[\w](?:[\w\-.]*[\w\-])?"),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DOUBLE", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+)"),
    ("DECIMAL", r"[+-]?\d*\.\d+"),
    ("INTEGER", r"[+-]?\d+"),
    ("PNAME", rf"{_PN_PREFIX}:{_PN_LOCAL}"),
    ("KEYWORD", r"[A-Za-z]+"),
    ("DTYPE", r"\^\^"),
    ("PUNCT", r"[.;,\[\]()]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in _TOKEN_SPEC))

_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_UCHAR = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")


def unescape_string(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        nxt = body[i + 1 : i + 2]
        if nxt in _ECHAR:
            out.append(_ECHAR[nxt])
            i += 2
        elif nxt == "u" and re.fullmatch(r"[0-9A-Fa-f]{4}", body[i + 2 : i + 6]):
            out.append(chr(int(body[i + 2 : i + 6], 16)))
            i += 6
        elif nxt == "U" and re.fullmatch(r"[0-9A-Fa-f]{8}", body[i + 2 : i + 10]):
            out.append(chr(int(body[i + 2 : i + 10], 16)))
            i += 10
        else:
            raise ValueError(f"invalid escape sequence \\{nxt}")
    return "".join(out)


def unescape_iri(body: str) -> str:
    return _UCHAR.sub(lambda m: chr(int(m.group(1) or m.group(2), 16)), body)


def escape_string(value: str) -> str:
    out = []
    for c in value:
        if c == "\\":
            out.append("\\\\")
        elif c == '"':
            out.append('\\"')
        elif c == "\n":
            out.append("\\n")
        elif c == "\r":
            out.append("\\r")
        elif c == "\t":
            out.append("\\t")
        elif ord(c) < 0x20 or ord(c) == 0x7F or 0xD800 <= ord(c) <= 0xDFFF:
            out.append(f"\\u{ord(c):04X}")
        else:
            out.append(c)
    return "".join(out)


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.line_starts = [0] + [m.end() for m in re.finditer(r"\n", text)]
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", *self.position(pos))
            kind = m.lastgroup
            if kind not in ("WS", "COMMENT"):
                self.tokens.append((kind, m.group(), pos))
            pos = m.end()
        self.tokens.append(("EOF", "", len(text)))

    def position(self, offset: int) -> tuple[int, int]:
        line = bisect.bisect_right(self.line_starts, offset)
        return line, offset - self.line_starts[line - 1] + 1


class _TurtleParser:
    def __init__(self, text: str, graph: Iri, base: Optional[str]):
        self.lexer = _Lexer(text)
        self.toks = self.lexer.tokens
        self.i = 0
        self.graph = graph
        self.base = base
        self.prefixes: dict[str, str] = {}
        self.quads: list[Quad] = []
        self.anon = 0

    # -- token helpers -----------------------------------------------------

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, *self.lexer.position(tok[2]))

    def expect_punct(self, value: str):
        tok = self.next()
        if tok[0] != "PUNCT" or tok[1] != value:
            shown = "end of input" if tok[0] == "EOF" else repr(tok[1])
            self.error(f"expected {value!r}, found {shown}", tok)

    def is_punct(self, value: str) -> bool:
        tok = self.peek()
        return tok[0] == "PUNCT" and tok[1] == value

    # -- grammar -------------------------------------------------------------

    def parse(self) -> list[Quad]:
        while self.peek()[0] != "EOF":
            self.statement()
        return self.quads

    def statement(self):
        kind, value, _ = self.peek()
        if kind == "LANGTAG" and value in ("@prefix", "@base"):
            self.next()
            if value == "@prefix":
                self.prefix_decl()
            else:
                self.base_decl()
            self.expect_punct(".")
            return
        if kind == "KEYWORD" and value.upper() in ("PREFIX", "BASE"):
            self.next()
            if value.upper() == "PREFIX":
                self.prefix_decl()
            else:
                self.base_decl()
            return
        self.triples()
        self.expect_punct(".")

    def prefix_decl(self):
        tok = self.next()
        if tok[0] != "PNAME" or not tok[1].endswith(":") or tok[1].count(":") != 1:
            self.error("expected prefix name ending in ':'", tok)
        iri_tok = self.next()
        if iri_tok[0] != "IRIREF":
            self.error("expected IRI in prefix declaration", iri_tok)
        self.prefixes[tok[1][:-1]] = self.resolve(iri_tok).value

    def base_decl(self):
        tok = self.next()
        if tok[0] != "IRIREF":
            self.error("expected IRI in base declaration", tok)
        self.base = self.resolve(tok).value

    def triples(self):
        if self.is_punct("["):
            subject = self.blank_property_list()
            if self.is_punct("."):
                return
        else:
            subject = self.subject()
        self.predicate_object_list(subject)

    def subject(self):
        tok = self.peek()
        if tok[0] in ("IRIREF", "PNAME"):
            return self.iri()
        if tok[0] == "BNODE":
            self.next()
            return BlankNode(tok[1][2:])
        if tok[0] == "PUNCT" and tok[1] == "(":
            self.error("collections are not supported")
        if tok[0] == "EOF":
            self.error("expected subject, found end of input")
        self.error(f"expected subject, found {tok[1]!r}")

    def predicate_object_list(self, subject):
        while True:
            predicate = self.verb()
            self.object_list(subject, predicate)
            if not self.is_punct(";"):
                return
            while self.is_punct(";"):
                self.next()
            if self.peek()[0] == "PUNCT" and self.peek()[1] in (".", "]"):
                return

    def verb(self) -> Iri:
        tok = self.peek()
        if tok[0] == "KEYWORD" and tok[1] == "a":
            self.next()
            return Iri(RDF + "type")
        if tok[0] in ("IRIREF", "PNAME"):
            return self.iri()
        shown = "end of input" if tok[0] == "EOF" else repr(tok[1])
        self.error(f"expected predicate, found {shown}")

    def object_list(self, subject, predicate):
        while True:
            obj = self.object()
            self.quads.append(Quad(subject, predicate, obj, self.graph))
            if not self.is_punct(","):
                return
            self.next()

    def object(self):
        kind, value, _ = self.peek()
        if kind in ("IRIREF", "PNAME"):
            return self.iri()
        if kind == "BNODE":
            self.next()
            return BlankNode(value[2:])
        if kind == "PUNCT" and value == "[":
            return self.blank_property_list()
        if kind == "PUNCT" and value == "(":
            self.error("collections are not supported")
        if kind.startswith("STRING"):
            return self.literal()
        if kind in ("INTEGER", "DECIMAL", "DOUBLE"):
            self.next()
            return Literal(value, Iri(XSD + kind.lower()))
        if kind == "KEYWORD" and value in ("true", "false"):
            self.next()
            return Literal(value, Iri(XSD + "boolean"))
        shown = "end of input" if kind == "EOF" else repr(value)
        self.error(f"expected object, found {shown}")

    def blank_property_list(self):
        self.expect_punct("[")
        self.anon += 1
        node = BlankNode(f"anon-{self.anon}")
        if not self.is_punct("]"):
            self.predicate_object_list(node)
        self.expect_punct("]")
        return node

    def literal(self):
        tok = self.next()
        kind, raw = tok[0], tok[1]
        body = raw[3:-3] if kind.startswith("STRING_LONG") else raw[1:-1]
        try:
            lexical = unescape_string(body)
        except ValueError as exc:
            self.error(str(exc), tok)
        nxt = self.peek()
        if nxt[0] == "LANGTAG" and nxt[1] not in ("@prefix", "@base"):
            self.next()
            return Literal(lexical, language=nxt[1][1:])
        if nxt[0] == "DTYPE":
            self.next()
            if self.peek()[0] not in ("IRIREF", "PNAME"):
                self.error("expected datatype IRI after '^^'")
            return Literal(lexical, self.iri())
        return Literal(lexical)

    def iri(self) -> Iri:
        tok = self.next()
        if tok[0] == "IRIREF":
            return self.resolve(tok)
        prefix, _, local = tok[1].partition(":")
        if prefix not in self.prefixes:
            self.error(f"undefined prefix {prefix!r}", tok)
        local = re.sub(r"\\(.)", r"\1", local)
        try:
            return Iri(self.prefixes[prefix] + local)
        except TermError:
            self.error(f"malformed IRI from prefixed name {tok[1]!r}", tok)

    def resolve(self, tok) -> Iri:
        value = unescape_iri(tok[1][1:-1])
        if self.base and not re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*:", value):
            value = urljoin(self.base, value)
        try:
            return Iri(value)
        except TermError:
            self.error(f"malformed IRI <{value}>", tok)


def parse_turtle(text: str, base_graph: Iri, base: Optional[str] = None) -> list[Quad]:
    """Parse a Turtle document into quads placed in ``base_graph``."""
    return _TurtleParser(text, base_graph, base).parse()


# -- serialization ----------------------------------------------------------

_SAFE_LOCAL = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


class _Namer:
    def __init__(self, prefixes: dict[str, str]):
        self.prefixes = sorted(prefixes.items(), key=lambda kv: -len(kv[1]))

    def iri(self, value: Iri) -> str:
        for prefix, ns in self.prefixes:
            if value.value.startswith(ns):
                local = value.value[len(ns):]
                if _SAFE_LOCAL.fullmatch(local):
                    return f"{prefix}:{local}"
        return f"<{value.value}>"

    def term(self, term) -> str:
        if type(term) is Iri:
            return self.iri(term)
        if type(term) is BlankNode:
            return f"_:{term.label}"
        text = f'"{escape_string(term.lexical)}"'
        if term.language:
            return f"{text}@{term.language}"
        if term.datatype:
            return f"{text}^^{self.iri(term.datatype)}"
        return text


def serialize_turtle(quads: Iterable[Quad], prefixes: Optional[dict[str, str]] = None) -> str:
    """Render quads of a single graph as Turtle, subjects in lexicographic order."""
    quads = list(quads)
    graphs = {q.graph for q in quads}
    if len(graphs) > 1:
        raise ValueError(f"serialize_turtle takes one graph, got {len(graphs)}")
    prefixes = dict(STANDARD_PREFIXES if prefixes is None else prefixes)
    namer = _Namer(prefixes)
    lines = [f"@prefix {p}: <{ns}> ." for p, ns in sorted(prefixes.items())]
    by_subject: dict = defaultdict(lambda: defaultdict(set))
    for q in quads:
        by_subject[q.subject][q.predicate].add(q.object)
    rdf_type = Iri(RDF + "type")
    for subject in sorted(by_subject, key=term_key):
        lines.append("")
        preds = by_subject[subject]
        parts = []
        for pred in sorted(preds, key=lambda p: (p != rdf_type, term_key(p))):
            verb = "a" if pred == rdf_type else namer.iri(pred)
            objs = ", ".join(namer.term(o) for o in sorted(preds[pred], key=term_key))
            parts.append(f"{verb} {objs}")
        head = namer.term(subject)
        lines.append(f"{head} " + " ;\n    ".join(parts) + " .")
    return "\n".join(lines) + "\n"

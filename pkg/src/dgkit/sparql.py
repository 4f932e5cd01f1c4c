"""A small SPARQL SELECT engine: basic graph patterns, REGEX filters, DISTINCT, ORDER BY.

Evaluation runs over the union of all graphs in a :class:`GraphStore`
(each distinct triple counted once) with bag semantics.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .store import GraphStore
from .terms import (
    DG,
    RDF,
    SKOS,
    STANDARD_PREFIXES,
    XSD,
    BlankNode,
    Iri,
    Literal,
    Quad,
    Term,
    TermError,
)
from .turtle import unescape_string


class QueryError(ValueError):
    pass


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnsupportedFeature(QuerySyntaxError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return "?" + self.name


PatternTerm = Union[Var, Iri, Literal]


@dataclass(frozen=True)
class TriplePattern:
    subject: PatternTerm
    predicate: Union[Var, Iri]
    object: PatternTerm

    def variables(self) -> set[str]:
        return {t.name for t in (self.subject, self.predicate, self.object) if isinstance(t, Var)}


@dataclass(frozen=True)
class RegexFilter:
    variable: str
    pattern: str
    flags: str = ""

    def compiled(self) -> re.Pattern:
        flags = re.IGNORECASE if "i" in self.flags else 0
        if "s" in self.flags:
            flags |= re.DOTALL
        if "m" in self.flags:
            flags |= re.MULTILINE
        return re.compile(self.pattern, flags)


@dataclass
class Query:
    prefixes: dict
    select_vars: list[str]
    distinct: bool
    patterns: list[TriplePattern]
    filters: list[RegexFilter] = field(default_factory=list)
    order_by: list[str] = field(default_factory=list)
    order_desc: list[bool] = field(default_factory=list)
    limit: Optional[int] = None
    offset: int = 0

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for p in self.patterns:
            for t in (p.subject, p.predicate, p.object):
                if isinstance(t, Var):
                    seen.setdefault(t.name)
        for f in self.filters:
            seen.setdefault(f.variable)
        return list(seen)


_UNSUPPORTED = {
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "BIND", "VALUES", "SERVICE", "CONSTRUCT", "ASK",
    "DESCRIBE", "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE", "GROUP", "HAVING",
    "COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE", "EXISTS", "NOT", "FROM", "NAMED", "REDUCED",
}

_TOKENS = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<langtag>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<number>[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+))
  | (?P<pname>(?:[A-Za-z](?:[\w\-.]*[\w\-])?)?:(?:[\w:%](?:[\w\-:%.]*[\w\-:%])?)?)
  | (?P<word>[A-Za-z][A-Za-z0-9_]*)
  | (?P<dtype>\^\^)
  | (?P<punct>[{}().;,*])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKENS.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            toks.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _QueryParser:
    def __init__(self, text: str, prefixes: Optional[dict]):
        self.toks = _tokenize(text)
        self.i = 0
        self.defaults = dict(STANDARD_PREFIXES if prefixes is None else prefixes)
        self.prefixes: dict[str, str] = {}

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise QuerySyntaxError(message, tok[2])

    def word(self, tok) -> Optional[str]:
        return tok[1].upper() if tok[0] == "word" else None

    def expect_word(self, value):
        tok = self.next()
        if self.word(tok) != value:
            self.check_unsupported(tok)
            self.fail(f"expected {value}, found {tok[1] or 'end of query'!r}", tok)

    def expect_punct(self, value):
        tok = self.next()
        if tok != ("punct", value, tok[2]):
            self.check_unsupported(tok)
            self.fail(f"expected {value!r}, found {tok[1] or 'end of query'!r}", tok)

    def is_punct(self, value) -> bool:
        tok = self.peek()
        return tok[0] == "punct" and tok[1] == value

    def check_unsupported(self, tok):
        if self.word(tok) in _UNSUPPORTED:
            raise UnsupportedFeature(f"unsupported keyword {tok[1].upper()}", tok[2])

    def parse(self) -> Query:
        while self.word(self.peek()) in ("PREFIX", "BASE"):
            kw = self.word(self.next())
            if kw == "BASE":
                self.fail("BASE is not supported")
            ns = self.next()
            if ns[0] != "pname" or not ns[1].endswith(":") or ns[1].count(":") != 1:
                self.fail("expected prefix name ending in ':'", ns)
            iri = self.next()
            if iri[0] != "iri":
                self.fail("expected IRI after prefix name", iri)
            self.prefixes[ns[1][:-1]] = iri[1][1:-1]
        self.expect_word("SELECT")
        distinct = False
        if self.word(self.peek()) == "DISTINCT":
            self.next()
            distinct = True
        select: list[str] = []
        star = False
        if self.is_punct("*"):
            self.next()
            star = True
        else:
            while self.peek()[0] == "var":
                select.append(self.next()[1][1:])
            if not select:
                self.check_unsupported(self.peek())
                if self.is_punct("("):
                    raise UnsupportedFeature("projection expressions are not supported", self.peek()[2])
                self.fail("expected projection variables or '*'")
        if self.word(self.peek()) == "WHERE":
            self.next()
        patterns, filters = self.group()
        order_by, order_desc = [], []
        limit, offset = None, 0
        if self.word(self.peek()) == "ORDER":
            self.next()
            self.expect_word("BY")
            while True:
                tok = self.peek()
                if tok[0] == "var":
                    order_by.append(self.next()[1][1:])
                    order_desc.append(False)
                elif self.word(tok) in ("ASC", "DESC"):
                    self.next()
                    self.expect_punct("(")
                    v = self.next()
                    if v[0] != "var":
                        self.fail("ORDER BY supports variables only", v)
                    self.expect_punct(")")
                    order_by.append(v[1][1:])
                    order_desc.append(self.word(tok) == "DESC")
                else:
                    break
            if not order_by:
                self.fail("expected ORDER BY variables")
        while self.word(self.peek()) in ("LIMIT", "OFFSET"):
            kw = self.word(self.next())
            n = self.next()
            if n[0] != "number" or not n[1].isdigit():
                self.fail(f"{kw} takes a nonnegative integer", n)
            if kw == "LIMIT":
                limit = int(n[1])
            else:
                offset = int(n[1])
        tok = self.peek()
        if tok[0] != "eof":
            self.check_unsupported(tok)
            self.fail(f"unexpected {tok[1]!r} after query")
        query = Query(dict(self.prefixes), select, distinct, patterns, filters, order_by, order_desc, limit, offset)
        known = set(query.variables())
        if star:
            query.select_vars = [v for v in query.variables() if not v.startswith("_")]
        for v in query.select_vars + query.order_by:
            if v not in known:
                raise QuerySyntaxError(f"variable ?{v} does not appear in the WHERE clause", 0)
        return query

    def group(self):
        self.expect_punct("{")
        patterns: list[TriplePattern] = []
        filters: list[RegexFilter] = []
        while not self.is_punct("}"):
            tok = self.peek()
            if tok[0] == "eof":
                self.fail("unterminated group: expected '}'")
            if self.is_punct("."):
                self.next()
                continue
            if self.word(tok) == "FILTER":
                self.next()
                filters.append(self.filter())
                continue
            self.check_unsupported(tok)
            if self.is_punct("{"):
                raise UnsupportedFeature("nested groups are not supported", tok[2])
            self.triples(patterns)
            if not (self.is_punct(".") or self.is_punct("}")):
                self.check_unsupported(self.peek())
                self.fail(f"expected '.' or '}}', found {self.peek()[1] or 'end of query'!r}")
        self.next()
        return patterns, filters

    def filter(self) -> RegexFilter:
        self.expect_punct("(")
        tok = self.next()
        if self.word(tok) != "REGEX":
            self.check_unsupported(tok)
            self.fail("only FILTER(REGEX(...)) is supported", tok)
        self.expect_punct("(")
        wrapped = False
        if self.word(self.peek()) == "STR":
            self.next()
            self.expect_punct("(")
            wrapped = True
        var = self.next()
        if var[0] != "var":
            self.fail("REGEX expects a variable as its first argument", var)
        if wrapped:
            self.expect_punct(")")
        self.expect_punct(",")
        pat = self.next()
        if pat[0] != "string":
            self.fail("REGEX pattern must be a string literal", pat)
        flags = ""
        if self.is_punct(","):
            self.next()
            ftok = self.next()
            if ftok[0] != "string":
                self.fail("REGEX flags must be a string literal", ftok)
            flags = unescape_string(ftok[1][1:-1])
        self.expect_punct(")")
        self.expect_punct(")")
        result = RegexFilter(var[1][1:], unescape_string(pat[1][1:-1]), flags)
        try:
            result.compiled()
        except re.error as exc:
            raise QuerySyntaxError(f"invalid regular expression: {exc}", pat[2]) from None
        return result

    def triples(self, out: list):
        subject = self.term(allow_literal=False)
        while True:
            predicate = self.verb()
            while True:
                out.append(TriplePattern(subject, predicate, self.term(allow_literal=True)))
                if not self.is_punct(","):
                    break
                self.next()
            if not self.is_punct(";"):
                return
            while self.is_punct(";"):
                self.next()
            if self.is_punct(".") or self.is_punct("}"):
                return

    def verb(self):
        tok = self.peek()
        if tok[0] == "word" and tok[1] == "a":
            self.next()
            return Iri(RDF + "type")
        if tok[0] in ("string", "number"):
            self.fail("a literal cannot be a predicate", tok)
        t = self.term(allow_literal=False)
        return t

    def term(self, allow_literal: bool):
        tok = self.next()
        kind, value = tok[0], tok[1]
        if kind == "var":
            return Var(value[1:])
        if kind == "iri":
            return self.make_iri(value[1:-1], tok)
        if kind == "pname":
            prefix, _, local = value.partition(":")
            if prefix in self.prefixes:
                ns = self.prefixes[prefix]
            elif prefix in self.defaults:
                ns = self.defaults[prefix]
            else:
                self.fail(f"unknown prefix {prefix!r}", tok)
            return self.make_iri(ns + local, tok)
        if allow_literal and kind == "string":
            lexical = unescape_string(value[1:-1])
            nxt = self.peek()
            if nxt[0] == "langtag":
                self.next()
                return Literal(lexical, language=nxt[1][1:])
            if nxt[0] == "dtype":
                self.next()
                dt = self.term(allow_literal=False)
                if not isinstance(dt, Iri):
                    self.fail("datatype must be an IRI", nxt)
                return Literal(lexical, dt)
            return Literal(lexical)
        if allow_literal and kind == "number":
            if re.fullmatch(r"[+-]?\d+", value):
                return Literal(value, Iri(XSD + "integer"))
            if "e" in value.lower():
                return Literal(value, Iri(XSD + "double"))
            return Literal(value, Iri(XSD + "decimal"))
        if allow_literal and kind == "word" and value in ("true", "false"):
            return Literal(value, Iri(XSD + "boolean"))
        self.check_unsupported(tok)
        what = "term" if allow_literal else "subject or predicate"
        self.fail(f"expected {what}, found {value or 'end of query'!r}", tok)

    def make_iri(self, value, tok):
        try:
            return Iri(value)
        except TermError:
            self.fail(f"malformed IRI {value!r}", tok)


def parse_query(text: str, prefixes: Optional[dict] = None) -> Query:
    """Parse a SELECT query.

    ``prefixes`` supplies prefixes usable without a PREFIX declaration; by
    default the standard vocabularies plus ``:`` for the governance ontology.
    """
    return _QueryParser(text, prefixes).parse()


# -- evaluation -------------------------------------------------------------


@dataclass
class SolutionTable:
    vars: list[str]
    rows: list[dict]

    def __len__(self):
        return len(self.rows)

    def values(self) -> list[tuple]:
        return [tuple(row.get(v) for v in self.vars) for row in self.rows]

    def strings(self) -> list[tuple]:
        return [tuple(term_text(row.get(v)) for v in self.vars) for row in self.rows]


def term_text(term: Optional[Term]) -> str:
    """String form used by REGEX and CSV output: lexical form for literals, IRI text for IRIs."""
    if term is None:
        return ""
    if type(term) is Iri:
        return term.value
    if type(term) is BlankNode:
        return term.label
    return term.lexical


def order_key(term: Optional[Term]) -> tuple:
    if term is None:
        return (0,)
    if type(term) is Literal:
        num = term.numeric_value()
        if num is not None:
            return (1, num, term.lexical)
        return (2, 2, term.lexical, term.datatype.value if term.datatype else "", term.language or "")
    if type(term) is Iri:
        return (2, 0, term.value)
    return (2, 1, term.label)


def _resolve(t, binding):
    if isinstance(t, Var):
        return binding.get(t.name)
    return t


def _plan(patterns: list[TriplePattern], filters: list[RegexFilter], store: GraphStore) -> list[TriplePattern]:
    """Greedy join order: most-constrained pattern next, preferring ones that unlock a filter."""
    remaining = list(enumerate(patterns))
    bound: set[str] = set()
    filter_vars = {f.variable for f in filters}
    ordered = []
    while remaining:
        def cost(item):
            idx, p = item
            positions = (p.subject, p.predicate, p.object)
            fixed = sum(1 for t in positions if not isinstance(t, Var) or t.name in bound)
            connected = not bound or bool(p.variables() & bound)
            unlocks = bool((p.variables() - bound) & filter_vars)
            consts = [t if not isinstance(t, Var) else None for t in positions]
            size = store.count(*consts)
            return (not connected, -fixed, not unlocks, size, idx)

        best = min(remaining, key=cost)
        remaining.remove(best)
        ordered.append(best[1])
        bound |= best[1].variables()
    return ordered


def _extend(binding: dict, pattern: TriplePattern, store: GraphStore, multi_graph: bool):
    s = _resolve(pattern.subject, binding)
    p = _resolve(pattern.predicate, binding)
    o = _resolve(pattern.object, binding)
    if type(p) is Literal or type(s) is Literal:
        return
    seen = set() if multi_graph else None
    for q in store.match(s, p, o):
        if seen is not None:
            key = (q.subject, q.predicate, q.object)
            if key in seen:
                continue
            seen.add(key)
        new = binding
        ok = True
        for pos, value in ((pattern.subject, q.subject), (pattern.predicate, q.predicate), (pattern.object, q.object)):
            if isinstance(pos, Var):
                current = new.get(pos.name)
                if current is None:
                    if new is binding:
                        new = dict(binding)
                    new[pos.name] = value
                elif current != value:
                    ok = False
                    break
        if ok:
            yield new


def evaluate(query: Query, store: GraphStore) -> SolutionTable:
    """Evaluate ``query`` against the union of all graphs in ``store``."""
    multi_graph = len(store.graphs()) > 1
    plan = _plan(query.patterns, query.filters, store)
    compiled = [(f.variable, f.compiled()) for f in query.filters]
    pending = list(compiled)
    solutions: list[dict] = [{}]
    bound: set[str] = set()

    def apply_filters(rows, ready):
        for var, rx in ready:
            rows = [r for r in rows if r.get(var) is not None and rx.search(term_text(r[var]))]
        return rows

    for pattern in plan:
        solutions = [new for b in solutions for new in _extend(b, pattern, store, multi_graph)]
        bound |= pattern.variables()
        ready = [f for f in pending if f[0] in bound]
        pending = [f for f in pending if f[0] not in bound]
        solutions = apply_filters(solutions, ready)
        if not solutions:
            break
    if pending:
        # A filter over a never-bound variable is an error, which removes the row.
        solutions = []

    if query.order_by:
        tiebreak = [v for v in query.select_vars if v not in query.order_by]
        solutions.sort(key=lambda r: tuple(order_key(r.get(v)) for v in tiebreak))
        for var, desc in reversed(list(zip(query.order_by, query.order_desc or [False] * len(query.order_by)))):
            solutions.sort(key=lambda r: order_key(r.get(var)), reverse=desc)

    rows = [{v: r[v] for v in query.select_vars if r.get(v) is not None} for r in solutions]
    if query.distinct:
        seen = set()
        unique = []
        for r in rows:
            key = tuple(r.get(v) for v in query.select_vars)
            if key not in seen:
                seen.add(key)
                unique.append(r)
        rows = unique
    if query.offset:
        rows = rows[query.offset:]
    if query.limit is not None:
        rows = rows[: query.limit]
    return SolutionTable(list(query.select_vars), rows)


def run_query(text: str, store: GraphStore, prefixes: Optional[dict] = None) -> SolutionTable:
    return evaluate(parse_query(text, prefixes), store)


# -- output -------------------------------------------------------------------


def _binding_json(term: Term) -> dict:
    if type(term) is Iri:
        return {"type": "uri", "value": term.value}
    if type(term) is BlankNode:
        return {"type": "bnode", "value": term.label}
    out = {"type": "literal", "value": term.lexical}
    if term.language:
        out["xml:lang"] = term.language
    elif term.datatype:
        out["datatype"] = term.datatype.value
    return out


def to_sparql_json(table: SolutionTable) -> str:
    """Standard SPARQL 1.1 JSON results document, byte-deterministic for a given table."""
    doc = {
        "head": {"vars": list(table.vars)},
        "results": {
            "bindings": [
                {v: _binding_json(row[v]) for v in table.vars if row.get(v) is not None}
                for row in table.rows
            ]
        },
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def to_csv(table: SolutionTable, headers: Optional[list[str]] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers or table.vars)
    for row in table.strings():
        writer.writerow(row)
    return buf.getvalue()


# -- query catalogue --------------------------------------------------------

Q_QUERY = Iri(DG + "Query")
Q_TEXT = Iri(DG + "queryText")
Q_ANNOTATION = Iri(DG + "annotation")
RDF_TYPE = Iri(RDF + "type")
PREF_LABEL = Iri(SKOS + "prefLabel")


@dataclass(frozen=True)
class CatalogueEntry:
    name: str
    iri: Iri
    text: str
    annotations: tuple[str, ...]

    def summary(self) -> str:
        return f"{self.name}\t{self.iri.value}\t{', '.join(self.annotations)}"


def catalogue_graph(store: GraphStore) -> Iri:
    return Iri(store.base + "/graphs/catalogue")


def register_query(store: GraphStore, minter, name: str, text: str,
                   annotations: Iterable[Union[Iri, str]] = ()) -> Iri:
    """Store a named query with its annotations; the text must parse."""
    parse_query(text)
    uri = minter.mint("query", name)
    g = catalogue_graph(store)
    with store.write_lock:
        for q in list(store.match(uri, None, None, g)):
            store.remove(q)
        store.add(Quad(uri, RDF_TYPE, Q_QUERY, g))
        store.add(Quad(uri, PREF_LABEL, Literal(name), g))
        store.add(Quad(uri, Q_TEXT, Literal(text), g))
        for a in annotations:
            store.add(Quad(uri, Q_ANNOTATION, a if isinstance(a, Iri) else Literal(str(a)), g))
    return uri


def query_catalogue(store: GraphStore) -> list[CatalogueEntry]:
    entries = []
    for q in store.match(None, RDF_TYPE, Q_QUERY):
        uri = q.subject
        label = store.value(uri, PREF_LABEL)
        text = store.value(uri, Q_TEXT)
        notes = tuple(sorted(term_text(a) for a in store.objects(uri, Q_ANNOTATION)))
        entries.append(CatalogueEntry(term_text(label), uri, term_text(text), notes))
    return sorted(set(entries), key=lambda e: (e.name, e.iri.value))


def get_query(store: GraphStore, name: str) -> CatalogueEntry:
    for entry in query_catalogue(store):
        if entry.name == name:
            return entry
    raise QueryError(f"no registered query named {name!r}")

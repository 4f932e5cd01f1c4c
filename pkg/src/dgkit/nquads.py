"""Line-oriented N-Quads (and N-Triples) parsing and serialization."""

from __future__ import annotations

import re
from typing import Iterable, Optional

from .terms import BlankNode, Iri, Literal, Quad, TermError, quad_key
from .turtle import ParseError, escape_string, unescape_iri, unescape_string

_TERM = re.compile(
    r"""
    [ \t]*
    (?:
        <(?P<iri>[^<>"{}|^`\\\x00-\x20]*)>
      | _:(?P<bnode>[\w](?:[\w\-.]*[\w\-])?)
      | "(?P<lit>(?:[^"\\\n\r]|\\.)*)"
        (?: @(?P<lang>[A-Za-z]+(?:-[A-Za-z0-9]+)*) | \^\^<(?P<dt>[^<>"{}|^`\\\x00-\x20]*)> )?
      | (?P<dot>\.)
      | (?P<comment>\#.*)
    )
    """,
    re.VERBOSE,
)


def _parse_line(line: str, lineno: int) -> list:
    terms = []
    pos = 0
    ended = False
    while pos < len(line):
        if not line[pos:].strip():
            break
        m = _TERM.match(line, pos)
        if m is None:
            col = pos + len(line[pos:]) - len(line[pos:].lstrip()) + 1
            raise ParseError(f"unexpected text {line[col - 1:col + 9]!r}", lineno, col)
        col = m.start() + len(m.group()) - len(m.group().lstrip()) + 1
        pos = m.end()
        if m.group("comment") is not None:
            break
        if ended:
            raise ParseError("content after terminating '.'", lineno, col)
        if m.group("dot") is not None:
            ended = True
            continue
        try:
            if m.group("iri") is not None:
                terms.append(Iri(unescape_iri(m.group("iri"))))
            elif m.group("bnode") is not None:
                terms.append(BlankNode(m.group("bnode")))
            else:
                lexical = unescape_string(m.group("lit"))
                if m.group("dt") is not None:
                    terms.append(Literal(lexical, Iri(unescape_iri(m.group("dt")))))
                else:
                    terms.append(Literal(lexical, language=m.group("lang")))
        except (TermError, ValueError) as exc:
            raise ParseError(str(exc), lineno, col) from None
    if not terms:
        return terms
    if not ended:
        raise ParseError("missing terminating '.'", lineno, len(line) + 1)
    return terms


def parse_nquads(text: str, default_graph: Optional[Iri] = None) -> list[Quad]:
    """Parse N-Quads; three-term lines land in ``default_graph``."""
    quads = []
    for lineno, line in enumerate(re.split(r"\r?\n", text), start=1):
        terms = _parse_line(line, lineno)
        if not terms:
            continue
        if len(terms) == 3:
            if default_graph is None:
                raise ParseError("line has no graph term and no default graph is configured", lineno, 1)
            terms.append(default_graph)
        if len(terms) != 4:
            raise ParseError(f"expected 3 or 4 terms, found {len(terms)}", lineno, 1)
        s, p, o, g = terms
        if type(s) is Literal:
            raise ParseError("subject cannot be a literal", lineno, 1)
        if type(p) is not Iri:
            raise ParseError("predicate must be an IRI", lineno, 1)
        if type(g) is not Iri:
            raise ParseError("graph must be an IRI", lineno, 1)
        quads.append(Quad(s, p, o, g))
    return quads


def format_term(term) -> str:
    if type(term) is Iri:
        return f"<{term.value}>"
    if type(term) is BlankNode:
        return f"_:{term.label}"
    text = f'"{escape_string(term.lexical)}"'
    if term.language:
        return f"{text}@{term.language}"
    if term.datatype:
        return f"{text}^^<{term.datatype.value}>"
    return text


def serialize_nquads(quads: Iterable[Quad]) -> str:
    """One line per quad, sorted by graph, subject, predicate, object."""
    lines = [
        f"{format_term(q.subject)} {format_term(q.predicate)} {format_term(q.object)} {format_term(q.graph)} ."
        for q in sorted(set(quads), key=quad_key)
    ]
    return "".join(line + "\n" for line in lines)

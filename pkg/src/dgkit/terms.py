"""RDF term model: IRIs, blank nodes, literals and quads."""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation
from typing import NamedTuple, Optional, Union

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
SKOS = "http://www.w3.org/2004/02/skos/core#"
PROV = "http://www.w3.org/ns/prov#"
DCT = "http://purl.org/dc/terms/"
DCAT = "http://www.w3.org/ns/dcat#"
DG = "https://ontology.example.org/dg#"

STANDARD_PREFIXES = {
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "skos": SKOS,
    "prov": PROV,
    "dct": DCT,
    "dcat": DCAT,
    "dg": DG,
    "": DG,
}

_IRI_BAD = re.compile(r'[\s<>"{}|^`\\]')
_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")


class TermError(ValueError):
    pass


def is_valid_iri(value: str) -> bool:
    """True for an absolute IRI without whitespace or forbidden delimiters."""
    return bool(value) and _SCHEME.match(value) is not None and not _IRI_BAD.search(value)


class Iri:
    __slots__ = ("value", "_hash")

    def __init__(self, value: str):
        if not is_valid_iri(value):
            raise TermError(f"malformed IRI: {value!r}")
        self.value = value
        self._hash = hash(("I", value))

    def __eq__(self, other):
        return type(other) is Iri and other.value == self.value

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return term_key(self) < term_key(other)

    def __repr__(self):
        return f"Iri({self.value!r})"

    def __str__(self):
        return self.value


class BlankNode:
    __slots__ = ("label", "_hash")

    def __init__(self, label: str):
        if not label:
            raise TermError("blank node label must be nonempty")
        self.label = label
        self._hash = hash(("B", label))

    def __eq__(self, other):
        return type(other) is BlankNode and other.label == self.label

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return term_key(self) < term_key(other)

    def __repr__(self):
        return f"BlankNode({self.label!r})"

    def __str__(self):
        return "_:" + self.label


class Literal:
    """An RDF literal.

    ``xsd:string`` is folded into the plain form (no datatype) so that
    ``"a"`` and ``"a"^^xsd:string`` compare equal.
    """

    __slots__ = ("lexical", "datatype", "language", "_hash")

    def __init__(self, lexical: str, datatype: Optional[Iri] = None, language: Optional[str] = None):
        if datatype is not None and language is not None:
            raise TermError("a literal cannot carry both a datatype and a language tag")
        if datatype is not None and datatype.value == XSD + "string":
            datatype = None
        if language is not None:
            if not re.fullmatch(r"[A-Za-z]+(-[A-Za-z0-9]+)*", language):
                raise TermError(f"malformed language tag: {language!r}")
            language = language.lower()
        self.lexical = lexical
        self.datatype = datatype
        self.language = language
        self._hash = hash(("L", lexical, datatype, language))

    def __eq__(self, other):
        return (
            type(other) is Literal
            and other.lexical == self.lexical
            and other.datatype == self.datatype
            and other.language == self.language
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return term_key(self) < term_key(other)

    def __repr__(self):
        if self.language:
            return f"Literal({self.lexical!r}, language={self.language!r})"
        if self.datatype:
            return f"Literal({self.lexical!r}, datatype={self.datatype.value!r})"
        return f"Literal({self.lexical!r})"

    def __str__(self):
        return self.lexical

    def numeric_value(self) -> Optional[Decimal]:
        """Numeric value for numeric XSD datatypes, or for plain literals that look numeric."""
        if self.language is not None:
            return None
        if self.datatype is not None and self.datatype.value not in NUMERIC_DATATYPES:
            return None
        if not _NUMBER.fullmatch(self.lexical.strip()):
            return None
        try:
            return Decimal(self.lexical.strip())
        except InvalidOperation:
            return None


Term = Union[Iri, BlankNode, Literal]
Subject = Union[Iri, BlankNode]

_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")

NUMERIC_DATATYPES = frozenset(
    XSD + t
    for t in (
        "integer", "decimal", "double", "float", "int", "long", "short", "byte",
        "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
        "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte",
    )
)


class Quad(NamedTuple):
    subject: Subject
    predicate: Iri
    object: Term
    graph: Iri


def make_quad(s: Subject, p: Iri, o: Term, g: Iri) -> Quad:
    if type(p) is not Iri:
        raise TermError(f"predicate must be an IRI, got {p!r}")
    if type(s) is Literal:
        raise TermError("subject cannot be a literal")
    if type(g) is not Iri:
        raise TermError("graph must be an IRI")
    return Quad(s, p, o, g)


_KIND_RANK = {Iri: 0, BlankNode: 1, Literal: 2}


def term_key(term: Term) -> tuple:
    """Total, deterministic sort key for terms (IRIs, then blank nodes, then literals)."""
    if type(term) is Iri:
        return (0, term.value, "", "")
    if type(term) is BlankNode:
        return (1, term.label, "", "")
    return (2, term.lexical, term.datatype.value if term.datatype else "", term.language or "")


def quad_key(q: Quad) -> tuple:
    return (term_key(q.graph), term_key(q.subject), term_key(q.predicate), term_key(q.object))


def iri(value: str) -> Iri:
    return Iri(value)


def typed(lexical, datatype: str) -> Literal:
    return Literal(str(lexical), Iri(XSD + datatype))


def integer(value: int) -> Literal:
    return Literal(str(int(value)), Iri(XSD + "integer"))


def expand_curie(value: str, prefixes: dict) -> str:
    """Expand ``prefix:local`` against ``prefixes``; absolute IRIs pass through."""
    if value.startswith("<") and value.endswith(">"):
        return value[1:-1]
    prefix, sep, local = value.partition(":")
    if sep and prefix in prefixes and not local.startswith("//"):
        return prefixes[prefix] + local
    if is_valid_iri(value):
        return value
    raise TermError(f"cannot expand {value!r}: unknown prefix {prefix!r}")

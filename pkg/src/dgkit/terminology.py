"""Business glossary and SKOS-style concept management."""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass, field
from typing import Optional

from .store import GraphStore
from .terms import DG, RDF, SKOS, Iri, Literal, Quad, is_valid_iri, term_key
from .turtle import serialize_turtle
from .uri import validate_uri

RDF_TYPE = Iri(RDF + "type")
RDF_VALUE = Iri(RDF + "value")
SKOS_CONCEPT = Iri(SKOS + "Concept")
PREF_LABEL = Iri(SKOS + "prefLabel")
ALT_LABEL = Iri(SKOS + "altLabel")
HIDDEN_LABEL = Iri(SKOS + "hiddenLabel")
NOTATION = Iri(SKOS + "notation")
DEFINITION = Iri(SKOS + "definition")
BROADER = Iri(SKOS + "broader")
DEF_SOURCE_KIND = Iri(DG + "definitionSource")
DEF_SOURCE_REF = Iri(DG + "sourceReference")
REFERENCE_LIST = Iri(DG + "ReferenceList")
RDF_SEQ = Iri(RDF + "Seq")


class TerminologyError(ValueError):
    pass


class SourceKind(enum.Enum):
    HUMAN = "Human"
    DOCUMENT = "Document"
    MACHINE = "Machine"

    @property
    def iri(self) -> Iri:
        return Iri(DG + self.value)


class Strength(enum.Enum):
    EXACT = "exactMatch"
    CLOSE = "closeMatch"
    NARROW = "narrowMatch"

    @property
    def predicate(self) -> Iri:
        return Iri(SKOS + self.value)

    @classmethod
    def parse(cls, value: str) -> "Strength":
        key = value.strip().lower().removesuffix("match")
        for s in cls:
            if s.value.lower().removesuffix("match") == key:
                return s
        raise TerminologyError(f"unknown mapping strength {value!r}")


class Scope(enum.Enum):
    INTER_LIST = "InterList"
    INTRA_LIST = "IntraList"


@dataclass(frozen=True)
class Definition:
    text: str
    source_kind: SourceKind
    source_ref: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise TerminologyError("definition text must be nonempty")
        if not isinstance(self.source_kind, SourceKind):
            raise TerminologyError(f"definition source must be one of {[k.value for k in SourceKind]}")


@dataclass
class Concept:
    uri: Iri
    pref_label: str
    alt_labels: set[str] = field(default_factory=set)
    definitions: list[Definition] = field(default_factory=list)
    broader: Optional[Iri] = None
    hidden_labels: set[str] = field(default_factory=set)

    def labels(self) -> list[str]:
        return [self.pref_label, *sorted(self.alt_labels), *sorted(self.hidden_labels)]


@dataclass
class ReferenceList:
    uri: Iri
    name: str
    members: list[Iri]


@dataclass(frozen=True)
class MappingLink:
    source: Iri
    target: Iri
    strength: Strength
    scope: Scope = Scope.INTER_LIST


def terminology_graph(store: GraphStore) -> Iri:
    return Iri(store.base + "/graphs/terminology")


def _check_uri(uri: Iri, registry) -> None:
    if registry is not None and uri.value.startswith(registry.authority + "/"):
        outcome = validate_uri(uri, registry)
        if not outcome.ok:
            raise TerminologyError(f"invalid governed URI {uri.value}: {'; '.join(outcome.violations)}")
    elif not is_valid_iri(uri.value):
        raise TerminologyError(f"invalid URI {uri.value!r}")


def upsert_concept(store: GraphStore, concept: Concept, registry=None, graph: Optional[Iri] = None) -> Iri:
    """Write ``concept`` into the store.

    Labels and the broader link are replaced; definitions are appended
    unless an identical (text, source, reference) definition already exists.
    """
    if not concept.pref_label.strip():
        raise TerminologyError("pref_label must be nonempty")
    _check_uri(concept.uri, registry)
    if concept.broader is not None and not store.has_subject(concept.broader):
        raise TerminologyError(f"broader concept {concept.broader.value} is not in the store")
    g = graph or terminology_graph(store)
    uri = concept.uri
    alts = set(concept.alt_labels) - {concept.pref_label}
    hidden = set(concept.hidden_labels) - {concept.pref_label} - alts
    with store.write_lock:
        for pred in (PREF_LABEL, ALT_LABEL, HIDDEN_LABEL, BROADER):
            for q in list(store.match(uri, pred, None, g)):
                store.remove(q)
        store.add(Quad(uri, RDF_TYPE, SKOS_CONCEPT, g))
        store.add(Quad(uri, PREF_LABEL, Literal(concept.pref_label), g))
        for label in alts:
            store.add(Quad(uri, ALT_LABEL, Literal(label), g))
        for label in hidden:
            store.add(Quad(uri, HIDDEN_LABEL, Literal(label), g))
        if concept.broader is not None:
            store.add(Quad(uri, BROADER, concept.broader, g))
        existing = read_definitions(store, uri)
        n = len(store.objects(uri, DEFINITION))
        for d in concept.definitions:
            if d in existing:
                continue
            n += 1
            node = Iri(f"{uri.value}/definition-{n}")
            store.add(Quad(uri, DEFINITION, node, g))
            store.add(Quad(node, RDF_VALUE, Literal(d.text), g))
            store.add(Quad(node, DEF_SOURCE_KIND, d.source_kind.iri, g))
            if d.source_ref:
                store.add(Quad(node, DEF_SOURCE_REF, Literal(d.source_ref), g))
            existing.append(d)
    return uri


def read_definitions(store: GraphStore, uri: Iri) -> list[Definition]:
    """Definitions of ``uri`` in insertion order."""
    out = []
    for node in sorted(store.objects(uri, DEFINITION), key=_definition_order):
        out.extend(read_definitions_from(store, node))
    return out


def _definition_order(node) -> tuple:
    m = re.search(r"definition-(\d+)$", node.value) if hasattr(node, "value") else None
    return (int(m.group(1)) if m else 0, term_key(node))


def get_concept(store: GraphStore, uri: Iri) -> Optional[Concept]:
    pref = store.objects(uri, PREF_LABEL)
    if not pref:
        return None
    broader = store.value(uri, BROADER)
    return Concept(
        uri=uri,
        pref_label=pref[0].lexical,
        alt_labels={t.lexical for t in store.objects(uri, ALT_LABEL)},
        definitions=read_definitions(store, uri),
        broader=broader if type(broader) is Iri else None,
        hidden_labels={t.lexical for t in store.objects(uri, HIDDEN_LABEL)},
    )


def read_definitions_from(store: GraphStore, node) -> list[Definition]:
    if type(node) is Literal:
        return [Definition(node.lexical, SourceKind.DOCUMENT)]
    text = store.value(node, RDF_VALUE)
    if text is None:
        return []
    kind = store.value(node, DEF_SOURCE_KIND)
    ref = store.value(node, DEF_SOURCE_REF)
    source = next((k for k in SourceKind if k.iri == kind), SourceKind.DOCUMENT)
    return [Definition(text.lexical, source, ref.lexical if ref is not None else "")]


def concepts(store: GraphStore) -> list[Concept]:
    uris = sorted({q.subject for q in store.match(None, RDF_TYPE, SKOS_CONCEPT)}, key=term_key)
    return [c for c in (get_concept(store, u) for u in uris) if c is not None]


# -- fuzzy matching -------------------------------------------------------------


def normalize_label(label: str) -> str:
    return " ".join(label.casefold().split())


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """1 minus the edit distance over the longer length, on case-folded, whitespace-collapsed labels."""
    a, b = normalize_label(a), normalize_label(b)
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def suggest_matches(store: GraphStore, new_label: str, threshold: float = 0.8) -> list[tuple[Concept, float]]:
    """Existing concepts whose best label similarity is at least ``threshold``.

    Preferred, alternative and hidden labels are all consulted. Results are
    sorted by descending score, ties by URI.
    """
    if not 0.0 <= threshold <= 1.0:
        raise TerminologyError("threshold must lie in [0, 1]")
    scored = []
    for concept in concepts(store):
        score = max(similarity(new_label, label) for label in concept.labels())
        if score >= threshold:
            scored.append((concept, score))
    scored.sort(key=lambda cs: (-cs[1], cs[0].uri.value))
    return scored


# -- mappings and reference lists -------------------------------------------


def add_mapping(store: GraphStore, link: MappingLink, graph: Optional[Iri] = None) -> None:
    """Store a SKOS match link; exact links also get their symmetric counterpart."""
    for end in (link.source, link.target):
        if not store.objects(end, PREF_LABEL):
            raise TerminologyError(f"unknown concept {end.value}")
    g = graph or terminology_graph(store)
    pred = link.strength.predicate
    store.add(Quad(link.source, pred, link.target, g))
    if link.strength is Strength.EXACT:
        store.add(Quad(link.target, pred, link.source, g))


def mapping_links(store: GraphStore) -> list[tuple[Iri, Strength, Iri]]:
    out = set()
    for s in Strength:
        for q in store.match(None, s.predicate):
            out.add((q.subject, s, q.object))
    return sorted(out, key=lambda t: (t[0].value, t[1].value, term_key(t[2])))


def upsert_reference_list(store: GraphStore, rl: ReferenceList, graph: Optional[Iri] = None) -> Iri:
    if len(set(rl.members)) != len(rl.members):
        raise TerminologyError("reference list members must be unique")
    for m in rl.members:
        if not store.objects(m, PREF_LABEL):
            raise TerminologyError(f"reference list member {m.value} is not a stored concept")
    g = graph or terminology_graph(store)
    with store.write_lock:
        for q in list(store.match(rl.uri, None, None, g)):
            if q.predicate.value.startswith(RDF + "_") or q.predicate == PREF_LABEL:
                store.remove(q)
        store.add(Quad(rl.uri, RDF_TYPE, REFERENCE_LIST, g))
        store.add(Quad(rl.uri, RDF_TYPE, RDF_SEQ, g))
        store.add(Quad(rl.uri, PREF_LABEL, Literal(rl.name), g))
        for i, m in enumerate(rl.members, 1):
            store.add(Quad(rl.uri, Iri(f"{RDF}_{i}"), m, g))
    return rl.uri


def get_reference_list(store: GraphStore, uri: Iri) -> ReferenceList:
    if not any(True for _ in store.match(uri, RDF_TYPE, REFERENCE_LIST)):
        raise TerminologyError(f"unknown reference list {uri.value}")
    members = []
    for q in store.match(uri, None, None):
        m = re.fullmatch(re.escape(RDF) + r"_(\d+)", q.predicate.value)
        if m:
            members.append((int(m.group(1)), q.object))
    name = store.value(uri, PREF_LABEL)
    ordered = []
    for _, member in sorted(members, key=lambda t: (t[0], term_key(t[1]))):
        if member not in ordered:
            ordered.append(member)
    return ReferenceList(uri, name.lexical if name is not None else "", ordered)


@dataclass(frozen=True)
class Coverage:
    mapped: int
    unmapped_a: list
    unmapped_b: list
    mapped_a: int = 0
    mapped_b: int = 0


def list_coverage(store: GraphStore, list_a: Iri, list_b: Iri) -> Coverage:
    """Mapping coverage between two reference lists.

    ``mapped`` counts distinct member pairs (one from each list) joined by
    any match link in either direction, which keeps it symmetric.
    """
    a = get_reference_list(store, list_a).members
    b = get_reference_list(store, list_b).members
    set_b = set(b)
    pairs = set()
    for x in a:
        for s in Strength:
            for q in store.match(x, s.predicate):
                if q.object in set_b:
                    pairs.add((x, q.object))
            for q in store.match(None, s.predicate, x):
                if q.subject in set_b:
                    pairs.add((x, q.subject))
    hit_a = {x for x, _ in pairs}
    hit_b = {y for _, y in pairs}
    return Coverage(
        mapped=len(pairs),
        unmapped_a=[x for x in a if x not in hit_a],
        unmapped_b=[y for y in b if y not in hit_b],
        mapped_a=len(hit_a),
        mapped_b=len(hit_b),
    )


def import_mappings_csv(store: GraphStore, text: str) -> int:
    """Read ``from,to,strength`` rows (header optional) and add each link."""
    rows = list(csv.reader(io.StringIO(text)))
    if rows and [c.strip().lower() for c in rows[0][:3]] == ["from", "to", "strength"]:
        rows = rows[1:]
    n = 0
    for i, row in enumerate(rows, 1):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 3:
            raise TerminologyError(f"mapping row {i}: expected 3 columns, got {len(row)}")
        add_mapping(store, MappingLink(Iri(row[0].strip()), Iri(row[1].strip()), Strength.parse(row[2])))
        n += 1
    return n


# -- glossary report ------------------------------------------------------

GLOSSARY_HEADER = ["uri", "pref_label", "alt_labels", "definitions"]


def glossary_rows(store: GraphStore) -> list[list[str]]:
    rows = []
    for c in concepts(store):
        defs = " | ".join(f"[{d.source_kind.value}] {d.text}" for d in c.definitions)
        rows.append([c.uri.value, c.pref_label, "; ".join(sorted(c.alt_labels)), defs])
    return rows


def glossary_report(store: GraphStore) -> str:
    """CSV glossary: one row per concept ordered by URI; definitions tagged with their source kind.

    Hidden labels are deliberately left out.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GLOSSARY_HEADER)
    writer.writerows(glossary_rows(store))
    return buf.getvalue()


def glossary_turtle(store: GraphStore) -> str:
    """The glossary content (labels, definitions with sources, broader links) as Turtle."""
    g = Iri(store.base + "/graphs/glossary")
    out: list[Quad] = []
    for c in concepts(store):
        out.append(Quad(c.uri, RDF_TYPE, SKOS_CONCEPT, g))
        out.append(Quad(c.uri, PREF_LABEL, Literal(c.pref_label), g))
        out.extend(Quad(c.uri, ALT_LABEL, Literal(a), g) for a in c.alt_labels)
        if c.broader is not None:
            out.append(Quad(c.uri, BROADER, c.broader, g))
        for node in store.objects(c.uri, DEFINITION):
            out.append(Quad(c.uri, DEFINITION, node, g))
            for pred in (RDF_VALUE, DEF_SOURCE_KIND, DEF_SOURCE_REF):
                out.extend(Quad(node, pred, o, g) for o in store.objects(node, pred))
    return serialize_turtle(out)


"""Enricher template ingestion: a three-part capture document (config, unique
concepts, additional properties) checked by QC and serialised to Turtle."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .terms import DCT, DG, RDF, SKOS, STANDARD_PREFIXES, Iri, Literal, Quad, is_valid_iri, typed
from .terminology import SourceKind
from .turtle import serialize_turtle
from .uri import Minter, SegmentRegistry, UriError, validate_uri

SECTIONS = ("config", "concepts", "properties")
CONFIG_KEYS = ("author", "source_organisation", "source_reference", "capture_date")
URI_PART_KEYS = ("business_domain", "business_subdomain", "system_of_record", "timestamp")
CONCEPT_HEADER = ["uri", "pref_label", "alt_labels", "definition", "class_tag"]
PROPERTY_HEADER = ["subject_uri", "predicate_uri", "object"]

RDF_TYPE = Iri(RDF + "type")
RDF_VALUE = Iri(RDF + "value")
SKOS_CONCEPT = Iri(SKOS + "Concept")
PREF_LABEL = Iri(SKOS + "prefLabel")
ALT_LABEL = Iri(SKOS + "altLabel")
DEFINITION = Iri(SKOS + "definition")
DEF_SOURCE_KIND = Iri(DG + "definitionSource")
DEF_SOURCE_REF = Iri(DG + "sourceReference")
CREATOR = Iri(DCT + "creator")
PUBLISHER = Iri(DCT + "publisher")
SOURCE = Iri(DCT + "source")
CREATED = Iri(DCT + "created")

# predicates must come from one of these vocabularies
GOVERNED_NAMESPACES = tuple(sorted({v for v in STANDARD_PREFIXES.values()}))


class EnricherError(ValueError):
    pass


class QcCheck(enum.Enum):
    URI_VALIDITY = "UriValidity"
    URI_UNIQUENESS = "UriUniqueness"
    LABEL_LOCAL_UNIQUENESS = "LabelLocalUniqueness"
    DEFINITION_PRESENCE = "DefinitionPresence"
    STRUCTURE_CONFORMANCE = "StructureConformance"


@dataclass(frozen=True)
class QcFinding:
    tab: str
    row: Optional[int]  # 1-based data row within the tab
    check: QcCheck
    message: str


@dataclass
class QcReport:
    findings: list[QcFinding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def checks(self) -> set[QcCheck]:
        return {f.check for f in self.findings}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tab", "row", "check", "message"])
        for f in self.findings:
            writer.writerow([f.tab, "" if f.row is None else f.row, f.check.value, f.message])
        return buf.getvalue()

    def to_text(self) -> str:
        if not self.findings:
            return "QC passed\n"
        lines = [f"{f.tab} row {f.row if f.row is not None else '-'}: {f.check.value}: {f.message}"
                 for f in self.findings]
        lines.append(f"{len(self.findings)} finding(s)")
        return "\n".join(lines) + "\n"


@dataclass
class EnricherDocument:
    config: dict
    concepts: list[dict]
    properties: list[dict]
    concept_header: list[str] = field(default_factory=lambda: list(CONCEPT_HEADER))
    property_header: list[str] = field(default_factory=lambda: list(PROPERTY_HEADER))


@dataclass
class IngestResult:
    report: QcReport
    turtle: Optional[str]
    quads: list[Quad] = field(default_factory=list)


def _table(text: str) -> tuple[list[str], list[dict]]:
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        return [], []
    header = [h.strip() for h in rows[0]]
    out = []
    for r in rows[1:]:
        cells = [c.strip() for c in r] + [""] * (len(header) - len(r))
        out.append(dict(zip(header, cells)))
    return header, out


def _config(text: str) -> dict:
    header, rows = _table(text)
    if header[:2] != ["key", "value"]:
        raise EnricherError("config section must have a key,value header")
    return {r["key"]: r["value"] for r in rows if r.get("key")}


def parse_sections(texts: dict[str, str]) -> EnricherDocument:
    missing = [s for s in SECTIONS if s not in texts]
    if missing:
        raise EnricherError(f"missing section(s): {', '.join(missing)}")
    c_header, concepts = _table(texts["concepts"])
    p_header, properties = _table(texts["properties"])
    return EnricherDocument(_config(texts["config"]), concepts, properties, c_header, p_header)


_SECTION_LINE = re.compile(r"^\[(\w+)\]\s*$")


def read_document(path: Union[str, Path]) -> EnricherDocument:
    """Read a CSV bundle directory (config.csv, concepts.csv, properties.csv) or a
    single file whose sections start with ``[config]``, ``[concepts]``, ``[properties]``."""
    path = Path(path)
    try:
        if path.is_dir():
            texts = {s: (path / f"{s}.csv").read_text(encoding="utf-8-sig")
                     for s in SECTIONS if (path / f"{s}.csv").exists()}
            return parse_sections(texts)
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise EnricherError(f"cannot read {path}: {exc}") from None
    texts: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _SECTION_LINE.match(line.strip())
        if m:
            current = m.group(1).lower()
            texts[current] = []
        elif current is not None:
            texts[current].append(line)
        elif line.strip():
            raise EnricherError("content before the first [section] header")
    return parse_sections({k: "\n".join(v) for k, v in texts.items()})


def _expand(value: str) -> Optional[str]:
    """An absolute IRI, or a CURIE over the standard prefixes, as an IRI string."""
    value = value.strip()
    if value.startswith("<") and value.endswith(">"):
        value = value[1:-1]
    if re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*://", value):
        return value
    m = re.fullmatch(r"([A-Za-z][\w\-]*)?:([\w\-.]+)", value)
    if m and (m.group(1) or "") in STANDARD_PREFIXES:
        return STANDARD_PREFIXES[m.group(1) or ""] + m.group(2)
    return None


def _concept_iri(value: str, minter: Optional[Minter]) -> Optional[str]:
    iri = _expand(value)
    if iri is not None:
        return iri
    if minter is not None and re.fullmatch(r"[A-Za-z0-9_.\-]+", value):
        try:
            return minter.mint("concept", value).value
        except UriError:
            return None
    return None


def _minter(config: dict, registry: Optional[SegmentRegistry]) -> Optional[Minter]:
    if registry is None or not all(config.get(k) for k in URI_PART_KEYS):
        return None
    return Minter(registry, **{k: config[k] for k in URI_PART_KEYS})


def run_qc(doc: EnricherDocument, registry: Optional[SegmentRegistry] = None,
           class_tags: tuple[str, ...] = ()) -> tuple[QcReport, dict[int, str]]:
    """QC the document; returns the report and the resolved IRI of each concept row."""
    report = QcReport()

    def add(tab, row, check, message):
        report.findings.append(QcFinding(tab, row, check, message))

    for key in CONFIG_KEYS:
        if not doc.config.get(key):
            add("config", None, QcCheck.STRUCTURE_CONFORMANCE, f"missing config value {key!r}")
    if doc.config.get("capture_date"):
        try:
            dt.date.fromisoformat(doc.config["capture_date"])
        except ValueError:
            add("config", None, QcCheck.STRUCTURE_CONFORMANCE, "capture_date is not an ISO date")
    for tab, header, expected in (("concepts", doc.concept_header, CONCEPT_HEADER),
                                  ("properties", doc.property_header, PROPERTY_HEADER)):
        if header != expected:
            add(tab, None, QcCheck.STRUCTURE_CONFORMANCE, f"header must be {','.join(expected)}")
    minter = _minter(doc.config, registry)
    tags = {t.casefold(): t for t in class_tags}
    resolved: dict[int, str] = {}
    first_uri: dict[str, int] = {}
    first_label: dict[str, int] = {}
    for n, row in enumerate(doc.concepts, 1):
        raw = row.get("uri", "")
        label = row.get("pref_label", "")
        if not raw:
            add("concepts", n, QcCheck.URI_VALIDITY, "missing uri")
        else:
            iri = _concept_iri(raw, minter)
            if iri is None or not is_valid_iri(iri):
                add("concepts", n, QcCheck.URI_VALIDITY, f"malformed uri {raw!r}")
            elif registry is not None and iri.startswith(registry.authority + "/") \
                    and not validate_uri(iri, registry).ok:
                add("concepts", n, QcCheck.URI_VALIDITY,
                    f"{iri}: {'; '.join(validate_uri(iri, registry).violations)}")
            elif iri in first_uri:
                add("concepts", n, QcCheck.URI_UNIQUENESS, f"uri {iri} repeats row {first_uri[iri]}")
            else:
                first_uri[iri] = n
                resolved[n] = iri
        if not label:
            add("concepts", n, QcCheck.STRUCTURE_CONFORMANCE, "missing pref_label")
        else:
            key = " ".join(label.casefold().split())
            if key in first_label:
                add("concepts", n, QcCheck.LABEL_LOCAL_UNIQUENESS,
                    f"pref_label {label!r} repeats row {first_label[key]}")
            else:
                first_label[key] = n
        if not row.get("definition"):
            add("concepts", n, QcCheck.DEFINITION_PRESENCE, f"concept {label or raw!r} has no definition")
        tag = row.get("class_tag", "")
        if tag and tags and tag.casefold() not in tags:
            add("concepts", n, QcCheck.STRUCTURE_CONFORMANCE, f"class tag {tag!r} is not an upper-ontology class")
    defined = set(resolved.values())
    for n, row in enumerate(doc.properties, 1):
        subject = _concept_iri(row.get("subject_uri", ""), minter)
        predicate = _expand(row.get("predicate_uri", ""))
        if subject is None or not is_valid_iri(subject):
            add("properties", n, QcCheck.URI_VALIDITY, f"malformed subject {row.get('subject_uri')!r}")
        elif subject not in defined:
            add("properties", n, QcCheck.DEFINITION_PRESENCE, f"linked concept {subject} is not defined in this file")
        if predicate is None or not is_valid_iri(predicate):
            add("properties", n, QcCheck.URI_VALIDITY, f"malformed predicate {row.get('predicate_uri')!r}")
        elif not predicate.startswith(GOVERNED_NAMESPACES):
            add("properties", n, QcCheck.STRUCTURE_CONFORMANCE, f"predicate {predicate} is not a governed predicate")
        if not row.get("object"):
            add("properties", n, QcCheck.STRUCTURE_CONFORMANCE, "missing object")
    return report, resolved


def document_quads(doc: EnricherDocument, resolved: dict[int, str], graph: Iri,
                   class_tags: tuple[str, ...] = ()) -> list[Quad]:
    cfg = doc.config
    minter_free = {k: v for k, v in ((r.get("uri"), resolved.get(n)) for n, r in enumerate(doc.concepts, 1)) if v}
    tags = {t.casefold(): t for t in class_tags}
    quads: list[Quad] = []
    for n, row in enumerate(doc.concepts, 1):
        uri = Iri(resolved[n])
        quads.append(Quad(uri, RDF_TYPE, SKOS_CONCEPT, graph))
        tag = row.get("class_tag")
        if tag:
            quads.append(Quad(uri, RDF_TYPE, Iri(DG + tags.get(tag.casefold(), tag)), graph))
        quads.append(Quad(uri, PREF_LABEL, Literal(row["pref_label"]), graph))
        for alt in (a.strip() for a in row.get("alt_labels", "").split("|")):
            if alt and alt != row["pref_label"]:
                quads.append(Quad(uri, ALT_LABEL, Literal(alt), graph))
        node = Iri(f"{uri.value}/definition-1")
        quads += [
            Quad(uri, DEFINITION, node, graph),
            Quad(node, RDF_VALUE, Literal(row["definition"]), graph),
            Quad(node, DEF_SOURCE_KIND, SourceKind.HUMAN.iri, graph),
            Quad(node, DEF_SOURCE_REF, Literal(cfg["source_reference"]), graph),
            Quad(uri, CREATOR, Literal(cfg["author"]), graph),
            Quad(uri, PUBLISHER, Literal(cfg["source_organisation"]), graph),
            Quad(uri, SOURCE, Literal(cfg["source_reference"]), graph),
            Quad(uri, CREATED, typed(cfg["capture_date"], "date"), graph),
        ]
    for row in doc.properties:
        subject = Iri(minter_free.get(row["subject_uri"]) or _expand(row["subject_uri"]))
        obj_text = row["object"]
        obj_iri = minter_free.get(obj_text) or _expand(obj_text)
        obj = Iri(obj_iri) if obj_iri and is_valid_iri(obj_iri) else Literal(obj_text)
        quads.append(Quad(subject, Iri(_expand(row["predicate_uri"])), obj, graph))
    return quads


def ingest_enricher(path: Union[str, Path], registry: Optional[SegmentRegistry] = None,
                    class_tags: tuple[str, ...] = (), graph: Optional[Iri] = None) -> IngestResult:
    """Run QC on an enricher document; on a clean report, serialise it to Turtle."""
    doc = read_document(path)
    report, resolved = run_qc(doc, registry, class_tags)
    if not report.ok:
        return IngestResult(report, None)
    g = graph or Iri((registry.authority if registry else "urn:dgkit") + "/graphs/enricher")
    quads = document_quads(doc, resolved, g, class_tags)
    return IngestResult(report, serialize_turtle(quads), quads)

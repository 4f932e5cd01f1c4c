"""Unified Clinical Model lineage: variables at data stages, derivations between
them, traversal, conceptual roll-up and an interpreter for the executable
derivation kinds."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Union

from .sparql import RegexFilter, SolutionTable, evaluate, parse_query, to_csv
from .store import GraphStore
from .terms import DG, RDF, SKOS, Iri, Literal, Quad, integer, term_key
from .uri import validate_uri

QUERY_DIR = Path(__file__).parent / "data" / "queries"

RDF_TYPE = Iri(RDF + "type")
SKOS_CONCEPT = Iri(SKOS + "Concept")
PREF_LABEL = Iri(SKOS + "prefLabel")
BROADER = Iri(SKOS + "broader")
VARIABLE = Iri(DG + "Variable")
DERIVATION = Iri(DG + "Derivation")
DATA_STAGE = Iri(DG + "dataStage")
STANDARD = Iri(DG + "standard")
DOMAIN = Iri(DG + "domain")
VARIABLE_NAME = Iri(DG + "variableName")
REFERENCE_LIST = Iri(DG + "referenceList")
IS_INPUT_OF = Iri(DG + "isInputOf")
HAS_INPUT = Iri(DG + "hasInput")
HAS_OUTPUT = Iri(DG + "hasOutput")
IS_OUTPUT_OF = Iri(DG + "isOutputOf")
TRANSFORMATION_RULE = Iri(DG + "transformationRule")
RULE_KIND = Iri(DG + "ruleKind")
REFERENCE_START = Iri(DG + "referenceStartVariable")

TABLE_HEADERS = [
    "Input Data Stage",
    "Input Variable",
    "Derivation",
    "Derivation Rule",
    "Output Variable",
    "Output Data Stage",
]

EPOCH = dt.date(1970, 1, 1)


class LineageError(ValueError):
    pass


class ArityError(LineageError):
    pass


class LineageCycleError(LineageError):
    def __init__(self, cycle: list):
        super().__init__("lineage cycle: " + " -> ".join(t.value for t in cycle))
        self.cycle = cycle


class RuleKind(enum.Enum):
    COPY_ELEMENT = "CopyElement"
    DTC = "Dtc"
    DTN = "Dtn"
    STUDY_DAY = "StudyDay"
    OPAQUE = "Opaque"


# (inputs, outputs); None means "one or more"
_ARITY = {
    RuleKind.COPY_ELEMENT: (1, 1),
    RuleKind.DTC: (2, 1),
    RuleKind.DTN: (1, 1),
    RuleKind.STUDY_DAY: (1, 1),
    RuleKind.OPAQUE: (None, None),
}


@dataclass(frozen=True)
class VariableNode:
    uri: Iri
    standard: str
    domain: str
    name: str
    data_stage: int
    fully_qualified_label: str
    broader: Optional[Iri] = None
    reference_list: Optional[Iri] = None

    def __post_init__(self):
        if self.data_stage < 1:
            raise LineageError(f"data_stage must be >= 1, got {self.data_stage}")
        if f"{self.domain}.{self.name}" not in self.fully_qualified_label:
            raise LineageError(
                f"label {self.fully_qualified_label!r} does not identify {self.domain}.{self.name}"
            )


@dataclass(frozen=True)
class Derivation:
    uri: Iri
    name: str
    rule_text: str
    rule_kind: RuleKind
    inputs: tuple[Iri, ...]
    outputs: tuple[Iri, ...]
    reference_start_var: Optional[str] = None

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise ArityError(f"{self.name}: derivations need at least one input and one output")
        n_in, n_out = _ARITY[self.rule_kind]
        if n_in is not None and len(self.inputs) != n_in:
            raise ArityError(f"{self.name}: {self.rule_kind.value} takes {n_in} input(s), got {len(self.inputs)}")
        if n_out is not None and len(self.outputs) != n_out:
            raise ArityError(f"{self.name}: {self.rule_kind.value} takes {n_out} output(s), got {len(self.outputs)}")


@dataclass
class ClinicalRecord:
    subject_id: str
    cells: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.subject_id:
            raise LineageError("subject_id must be nonempty")


def lineage_graph(store: GraphStore) -> Iri:
    return Iri(store.base + "/graphs/lineage")


def _check_governed(uri: Iri, registry) -> None:
    if registry is None:
        return
    outcome = validate_uri(uri, registry)
    if not outcome.ok:
        raise LineageError(f"{uri.value}: {'; '.join(outcome.violations)}")


def is_variable(store: GraphStore, uri: Iri) -> bool:
    return any(True for _ in store.match(uri, RDF_TYPE, VARIABLE))


def register_variable(store: GraphStore, v: VariableNode, registry=None, graph: Optional[Iri] = None) -> Iri:
    _check_governed(v.uri, registry)
    for ref in (v.broader, v.reference_list):
        if ref is not None and not store.has_subject(ref):
            raise LineageError(f"{v.uri.value}: referenced node {ref.value} is not in the store")
    g = graph or lineage_graph(store)
    u = v.uri
    quads = [
        Quad(u, RDF_TYPE, VARIABLE, g),
        Quad(u, RDF_TYPE, SKOS_CONCEPT, g),
        Quad(u, PREF_LABEL, Literal(v.fully_qualified_label), g),
        Quad(u, STANDARD, Literal(v.standard), g),
        Quad(u, DOMAIN, Literal(v.domain), g),
        Quad(u, VARIABLE_NAME, Literal(v.name), g),
        Quad(u, DATA_STAGE, integer(v.data_stage), g),
    ]
    if v.broader is not None:
        quads.append(Quad(u, BROADER, v.broader, g))
    if v.reference_list is not None:
        quads.append(Quad(u, REFERENCE_LIST, v.reference_list, g))
    store.add_all(quads)
    return u


def register_derivation(store: GraphStore, d: Derivation, registry=None, graph: Optional[Iri] = None,
                        materialize: bool = True) -> Iri:
    _check_governed(d.uri, registry)
    for ref in d.inputs + d.outputs:
        if not is_variable(store, ref):
            raise LineageError(f"{d.name}: dangling reference to unregistered variable {ref.value}")
    g = graph or lineage_graph(store)
    u = d.uri
    quads = [
        Quad(u, RDF_TYPE, DERIVATION, g),
        Quad(u, PREF_LABEL, Literal(d.name), g),
        Quad(u, TRANSFORMATION_RULE, Literal(d.rule_text), g),
        Quad(u, RULE_KIND, Literal(d.rule_kind.value), g),
    ]
    for i, inp in enumerate(d.inputs, 1):
        quads.append(Quad(u, Iri(f"{RDF}_{i}"), inp, g))
        quads.append(Quad(inp, IS_INPUT_OF, u, g))
    for out in d.outputs:
        quads.append(Quad(u, HAS_OUTPUT, out, g))
    if d.reference_start_var:
        quads.append(Quad(u, REFERENCE_START, Literal(d.reference_start_var), g))
    store.add_all(quads)
    if materialize:
        for q in quads:
            if q.predicate == IS_INPUT_OF:
                store.add(Quad(q.object, HAS_INPUT, q.subject, g))
            elif q.predicate == HAS_OUTPUT:
                store.add(Quad(q.object, IS_OUTPUT_OF, q.subject, g))
    return u


def _lit(store, s, p) -> Optional[str]:
    v = store.value(s, p)
    return v.lexical if isinstance(v, Literal) else None


def get_variable(store: GraphStore, uri: Iri) -> VariableNode:
    if not is_variable(store, uri):
        raise LineageError(f"unregistered variable {uri.value}")
    broader = store.value(uri, BROADER)
    ref = store.value(uri, REFERENCE_LIST)
    stage = store.value(uri, DATA_STAGE)
    return VariableNode(
        uri=uri,
        standard=_lit(store, uri, STANDARD) or "",
        domain=_lit(store, uri, DOMAIN) or "",
        name=_lit(store, uri, VARIABLE_NAME) or "",
        data_stage=int(stage.lexical) if stage is not None else 1,
        fully_qualified_label=_lit(store, uri, PREF_LABEL) or "",
        broader=broader if type(broader) is Iri else None,
        reference_list=ref if type(ref) is Iri else None,
    )


def _inputs(store: GraphStore, d: Iri) -> list[Iri]:
    ordered = []
    for q in store.match(d, None, None):
        m = re.fullmatch(re.escape(RDF) + r"_(\d+)", q.predicate.value)
        if m:
            ordered.append((int(m.group(1)), q.object))
    result = [o for _, o in sorted(ordered, key=lambda t: t[0])]
    rest = {q.subject for q in store.match(None, IS_INPUT_OF, d)} | set(store.objects(d, HAS_INPUT))
    result += sorted((r for r in rest if r not in result), key=term_key)
    return result


def _outputs(store: GraphStore, d: Iri) -> list[Iri]:
    outs = set(store.objects(d, HAS_OUTPUT)) | {q.subject for q in store.match(None, IS_OUTPUT_OF, d)}
    return sorted(outs, key=term_key)


def get_derivation(store: GraphStore, uri: Iri) -> Derivation:
    if not any(True for _ in store.match(uri, RDF_TYPE, DERIVATION)):
        raise LineageError(f"unregistered derivation {uri.value}")
    kind = _lit(store, uri, RULE_KIND) or RuleKind.OPAQUE.value
    return Derivation(
        uri=uri,
        name=_lit(store, uri, PREF_LABEL) or "",
        rule_text=_lit(store, uri, TRANSFORMATION_RULE) or "",
        rule_kind=RuleKind(kind),
        inputs=tuple(_inputs(store, uri)),
        outputs=tuple(_outputs(store, uri)),
        reference_start_var=_lit(store, uri, REFERENCE_START),
    )


def consuming(store: GraphStore, v: Iri) -> list[Iri]:
    """Derivations that take ``v`` as input."""
    ds = set(store.objects(v, IS_INPUT_OF)) | {q.subject for q in store.match(None, HAS_INPUT, v)}
    return sorted(ds, key=term_key)


def producing(store: GraphStore, v: Iri) -> list[Iri]:
    """Derivations that output ``v``."""
    ds = {q.subject for q in store.match(None, HAS_OUTPUT, v)} | set(store.objects(v, IS_OUTPUT_OF))
    return sorted(ds, key=term_key)


@dataclass(frozen=True)
class TechnicalLineage:
    producing: list
    consuming: list


def technical_lineage(store: GraphStore, v: Iri) -> TechnicalLineage:
    if not is_variable(store, v):
        raise LineageError(f"unregistered variable {v.value}")
    return TechnicalLineage(
        producing=[get_derivation(store, d) for d in producing(store, v)],
        consuming=[get_derivation(store, d) for d in consuming(store, v)],
    )


LineagePath = tuple  # alternating variable, derivation, variable, ... IRIs


def business_lineage(store: GraphStore, source: Iri, sink: Iri, max_paths: int = 1000,
                     max_depth: int = 32) -> list[LineagePath]:
    """All acyclic variable->derivation->variable paths from ``source`` to ``sink``.

    Shortest first, then lexicographic by IRI. At most ``max_paths`` paths of
    at most ``max_depth`` derivations are enumerated.
    """
    for v in (source, sink):
        if not is_variable(store, v):
            raise LineageError(f"unregistered variable {v.value}")
    if source == sink:
        return [(source,)]
    found: list[LineagePath] = []
    frontier = deque([(source,)])
    depth = 0
    while frontier and depth < max_depth and len(found) < max_paths:
        depth += 1
        next_frontier = deque()
        for path in frontier:
            visited = set(path)
            for d in consuming(store, path[-1]):
                if d in visited:
                    continue
                for out in _outputs(store, d):
                    if out in visited:
                        continue
                    extended = path + (d, out)
                    if out == sink:
                        found.append(extended)
                    else:
                        next_frontier.append(extended)
        frontier = next_frontier
    found.sort(key=lambda p: (len(p), tuple(t.value for t in p)))
    return found[:max_paths]


def check_acyclic(store: GraphStore) -> None:
    """Raise :class:`LineageCycleError` if any variable can reach itself."""
    graph: dict = {}
    for q in store.match(None, RDF_TYPE, DERIVATION):
        d = q.subject
        for inp in _inputs(store, d):
            graph.setdefault(inp, set()).update(_outputs(store, d))
    white, grey, black = 0, 1, 2
    colour: dict = {}
    for start in sorted(graph, key=term_key):
        if colour.get(start, white) != white:
            continue
        stack = [(start, iter(sorted(graph.get(start, ()), key=term_key)))]
        trail = [start]
        colour[start] = grey
        while stack:
            node, children = stack[-1]
            nxt = next(children, None)
            if nxt is None:
                colour[node] = black
                stack.pop()
                trail.pop()
                continue
            state = colour.get(nxt, white)
            if state == grey:
                raise LineageCycleError(trail[trail.index(nxt):] + [nxt])
            if state == white:
                colour[nxt] = grey
                trail.append(nxt)
                stack.append((nxt, iter(sorted(graph.get(nxt, ()), key=term_key))))


# -- conceptual roll-up --------------------------------------------------------


def lineage_query_text() -> str:
    return (QUERY_DIR / "ucm-lineage.rq").read_text(encoding="utf-8")


def conceptual_rollup(store: GraphStore, concept_pattern: str) -> SolutionTable:
    """Run the UCM lineage query with its REGEX filter set to ``concept_pattern``."""
    query = parse_query(lineage_query_text())
    try:
        re.compile(concept_pattern)
    except re.error as exc:
        raise LineageError(f"invalid pattern {concept_pattern!r}: {exc}") from None
    query.filters = [RegexFilter(f.variable, concept_pattern, f.flags) for f in query.filters]
    return evaluate(query, store)


def rollup_csv(table: SolutionTable) -> str:
    return to_csv(table, TABLE_HEADERS)


# -- execution -------------------------------------------------------------------


def to_date(value) -> dt.date:
    """Date portion of a date, datetime, ISO string, or day number since 1970-01-01."""
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return EPOCH + dt.timedelta(days=math.floor(value))
    if isinstance(value, str):
        text = value.strip()
        try:
            return dt.date.fromisoformat(text[:10])
        except ValueError:
            pass
        try:
            return to_date(float(text))
        except ValueError:
            pass
    raise LineageError(f"unparseable date value {value!r}")


def _to_datetime(value) -> dt.datetime:
    if isinstance(value, dt.datetime):
        return value
    if isinstance(value, dt.date):
        return dt.datetime(value.year, value.month, value.day)
    if isinstance(value, str):
        try:
            return dt.datetime.fromisoformat(value.strip())
        except ValueError:
            pass
    raise LineageError(f"unparseable date/time value {value!r}")


def _time_text(value) -> str:
    if isinstance(value, dt.time):
        return value.isoformat(timespec="minutes" if value.second == 0 else "seconds")
    text = str(value).strip()
    try:
        dt.time.fromisoformat(text)
    except ValueError:
        raise LineageError(f"unparseable time value {value!r}") from None
    return text


def combine_date_time(date_value, time_value) -> Optional[str]:
    """ISO-8601 ``<date>T<time>``; the date alone when the time is missing."""
    if date_value is None:
        return None
    date = to_date(date_value) if not isinstance(date_value, str) else dt.date.fromisoformat(date_value.strip())
    if time_value is None or (isinstance(time_value, str) and not time_value.strip()):
        return date.isoformat()
    return f"{date.isoformat()}T{_time_text(time_value)}"


def datetime_number(value) -> Optional[float]:
    """Days since 1970-01-01, with the time of day as the fractional part."""
    if value is None:
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    moment = _to_datetime(value)
    midnight = dt.datetime(moment.year, moment.month, moment.day)
    days = (moment.date() - EPOCH).days
    return days + (moment - midnight).total_seconds() / 86400.0


def study_day(event, start) -> Optional[int]:
    """Study day of ``event`` relative to ``start``: day 1 is the start, the day before is -1, no day 0."""
    if event is None or start is None:
        return None
    delta = (to_date(event) - to_date(start)).days
    return delta + 1 if delta >= 0 else delta


def _default_name(uri: Iri) -> str:
    tail = uri.value.rstrip("/").rsplit("/", 1)[-1]
    return re.split(r"[_.]", tail)[-1]


def execute_derivation(d: Derivation, record: ClinicalRecord, context: Optional[Mapping] = None,
                       names: Optional[Mapping[Iri, str]] = None) -> ClinicalRecord:
    """Apply one derivation to a record, returning a new record with the output cell set.

    ``names`` maps variable IRIs to record column names; by default the last
    ``_``/``.``-separated token of the IRI is used.
    """
    context = dict(context or {})
    name = (lambda u: names[u]) if names is not None else _default_name

    def cell(u):
        return record.cells.get(name(u))

    kind = d.rule_kind
    if kind is RuleKind.OPAQUE:
        raise LineageError(f"{d.name} is opaque and cannot be executed")
    if kind is RuleKind.COPY_ELEMENT:
        value = cell(d.inputs[0])
    elif kind is RuleKind.DTC:
        value = combine_date_time(cell(d.inputs[0]), cell(d.inputs[1]))
    elif kind is RuleKind.DTN:
        value = datetime_number(cell(d.inputs[0]))
    else:
        ref_var = context.get("study_day_ref_var") or d.reference_start_var
        start = record.cells.get(ref_var) if ref_var else None
        if start is None:
            start = context.get("reference_start")
        value = study_day(cell(d.inputs[0]), start)
    cells = dict(record.cells)
    for out in d.outputs:
        cells[name(out)] = value
    return replace(record, cells=cells)


def _names(store: GraphStore) -> dict:
    out = {}
    for q in store.match(None, VARIABLE_NAME):
        if isinstance(q.object, Literal):
            out[q.subject] = q.object.lexical
    return out


def plan_derivations(store: GraphStore, target: Iri, available: set[str],
                     names: Optional[Mapping] = None) -> list[Derivation]:
    """Derivations, in dependency order, that produce ``target`` from ``available`` columns."""
    names = names if names is not None else _names(store)
    cache: dict = {}

    def resolve(v: Iri, visiting: frozenset, force: bool):
        if not force and names.get(v) in available:
            return []
        if v in cache:
            return cache[v]
        for d_uri in producing(store, v):
            d = get_derivation(store, d_uri)
            if d.rule_kind is RuleKind.OPAQUE or d_uri in visiting:
                continue
            plan = []
            ok = True
            for inp in d.inputs:
                sub = resolve(inp, visiting | {d_uri}, False)
                if sub is None:
                    ok = False
                    break
                plan.extend(sub)
            if ok:
                cache[v] = plan + [d]
                return cache[v]
        cache[v] = None
        return None

    plan = resolve(target, frozenset(), True)
    if plan is None:
        raise LineageError(f"no producing path to {target.value}")
    seen = set()
    ordered = []
    for d in plan:
        if d.uri not in seen:
            seen.add(d.uri)
            ordered.append(d)
    return ordered


def execute_pipeline(store: GraphStore, records: list[ClinicalRecord], target: Iri,
                     context: Optional[Mapping] = None) -> list[ClinicalRecord]:
    """Populate ``target`` on every record by running the derivations that lead to it."""
    if not is_variable(store, target):
        raise LineageError(f"unregistered variable {target.value}")
    names = _names(store)
    out = []
    plans: dict = {}
    for record in records:
        available = frozenset(record.cells)
        if available not in plans:
            plans[available] = plan_derivations(store, target, set(available), names)
        for d in plans[available]:
            record = execute_derivation(d, record, context, names)
        out.append(record)
    return out


def read_records(text: str, subject_column: str = "USUBJID") -> list[ClinicalRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or subject_column not in reader.fieldnames:
        raise LineageError(f"records need a {subject_column!r} column")
    records = []
    for row in reader:
        cells = {k: (v if v != "" else None) for k, v in row.items() if k != subject_column}
        records.append(ClinicalRecord(row[subject_column], cells))
    return records


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(round(value, 9)).rstrip("0").rstrip(".") if not value.is_integer() else str(int(value))
    return str(value)


def write_records(records: list[ClinicalRecord], subject_column: str = "USUBJID") -> str:
    columns: list[str] = []
    for r in records:
        for k in r.cells:
            if k not in columns:
                columns.append(k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([subject_column] + columns)
    for r in records:
        writer.writerow([r.subject_id] + [_cell_text(r.cells.get(c)) for c in columns])
    return buf.getvalue()


def path_labels(store: GraphStore, path: LineagePath) -> list[str]:
    return [_lit(store, t, PREF_LABEL) or t.value for t in path]


def lineage_table_rows(store: GraphStore, variable: Iri) -> list[list[str]]:
    rows = []
    tl = technical_lineage(store, variable)
    for role, ds in (("producing", tl.producing), ("consuming", tl.consuming)):
        for d in ds:
            rows.append([role, d.name, d.rule_text, d.uri.value])
    return rows


def variable_uri(store: GraphStore, label_or_uri: str) -> Iri:
    """Accept a variable IRI or its fully qualified label prefix (e.g. ``DR.AE.AEENDY``)."""
    if re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*://", label_or_uri):
        return Iri(label_or_uri)
    hits = []
    for q in store.match(None, RDF_TYPE, VARIABLE):
        label = _lit(store, q.subject, PREF_LABEL) or ""
        if label == label_or_uri or label.split(" [", 1)[0] == label_or_uri:
            hits.append(q.subject)
    if len(hits) != 1:
        raise LineageError(f"{label_or_uri!r} matches {len(hits)} variables")
    return hits[0]


Number = Union[int, float]

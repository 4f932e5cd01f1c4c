"""Semantic ETL: extract tabular data, transform cells, validate against a table
shape and emit conformant quads with provenance."""

from __future__ import annotations

import builtins
import csv
import datetime as dt
import enum
import hashlib
import io
import json
import os
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional, Union

import yaml

from .store import GraphStore, LoadReport, graph_name, load
from .terms import DG, PROV, RDF, SKOS, XSD, STANDARD_PREFIXES, Iri, Literal, Quad, expand_curie, is_valid_iri, typed
from .uri import Minter, SegmentRegistry, UriError

RDF_TYPE = Iri(RDF + "type")
LABEL_PREDICATES = tuple(Iri(SKOS + p) for p in ("prefLabel", "altLabel", "hiddenLabel", "notation"))
SKOS_MEMBER = Iri(SKOS + "member")

TOKEN = re.compile(r"[A-Za-z0-9_.\-]+")
ABSOLUTE_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:\S+$")

VALIDATED_DATATYPES = {XSD + t for t in ("string", "integer", "decimal", "date", "dateTime", "boolean")}
KNOWN_DATATYPES = VALIDATED_DATATYPES | {
    XSD + t for t in ("double", "float", "time", "anyURI", "long", "int", "short", "byte",
                      "nonNegativeInteger", "positiveInteger", "gYear", "duration", "token")
}

PROV_ACTIVITY = Iri(PROV + "Activity")
PROV_USED = Iri(PROV + "used")
PROV_GENERATED = Iri(PROV + "generated")
PROV_STARTED = Iri(PROV + "startedAtTime")
INPUT_SOURCE = Iri(DG + "inputSource")
USED_SHAPE = Iri(DG + "usedShape")
TRANSFORM_DIGEST = Iri(DG + "transformDigest")


class EtlError(ValueError):
    pass


# -- frames --------------------------------------------------------------------


@dataclass
class Frame:
    columns: list[str]
    rows: list[list[Optional[str]]]

    def __post_init__(self):
        seen = set()
        for c in self.columns:
            if c in seen:
                raise EtlError(f"duplicate column {c!r}")
            seen.add(c)
        for i, row in enumerate(self.rows, 1):
            if len(row) != len(self.columns):
                raise EtlError(f"row {i}: expected {len(self.columns)} cells, found {len(row)}")

    def index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise EtlError(f"unknown column {column!r}") from None

    def column(self, name: str) -> list[Optional[str]]:
        i = self.index(name)
        return [r[i] for r in self.rows]

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow(["" if v is None else v for v in r])
        return buf.getvalue()


def _cell(value) -> Optional[str]:
    if value is None:
        return None
    text = value if isinstance(value, str) else json.dumps(value) if isinstance(value, bool) else str(value)
    return text if text != "" else None


def frame_from_csv(text: str) -> Frame:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EtlError("empty CSV: no header row")
    header, body = rows[0], rows[1:]
    seen = set()
    for h in header:
        if h in seen:
            raise EtlError(f"duplicate header {h!r}")
        seen.add(h)
    out = []
    for i, row in enumerate(body, 1):
        if not row:
            continue
        if len(row) != len(header):
            raise EtlError(f"ragged row {i}: expected {len(header)} cells, found {len(row)}")
        out.append([_cell(v) for v in row])
    return Frame(list(header), out)


def frame_from_records(records: list) -> Frame:
    if not isinstance(records, list) or not all(isinstance(r, dict) for r in records):
        raise EtlError("structured records must be a list of objects")
    columns: list[str] = []
    for r in records:
        for k in r:
            if k not in columns:
                columns.append(k)
    return Frame(columns, [[_cell(r.get(c)) for c in columns] for r in records])


def extract(path: Union[str, Path], format: Optional[str] = None) -> Frame:
    """Read a CSV file or a JSON array of records into a :class:`Frame`."""
    path = Path(path)
    fmt = format or ("records" if path.suffix.lower() == ".json" else "csv")
    text = path.read_text(encoding="utf-8-sig")
    if fmt == "csv":
        return frame_from_csv(text)
    if fmt == "records":
        try:
            return frame_from_records(json.loads(text))
        except json.JSONDecodeError as exc:
            raise EtlError(f"{path.name}: {exc}") from None
    raise EtlError(f"unknown format {fmt!r}")


# -- transforms -----------------------------------------------------------------


class TransformKind(enum.Enum):
    TRIM = "Trim"
    CASE_FOLD = "CaseFold"
    PARSE_NUMBER = "ParseNumber"
    PARSE_DATE = "ParseDate"
    COMPUTED = "Computed"


@dataclass(frozen=True)
class ValueTransform:
    kind: TransformKind
    target_column: str
    format: Optional[str] = None
    expression: Optional[str] = None
    case: str = "upper"

    def __post_init__(self):
        if self.kind is TransformKind.PARSE_DATE and not self.format:
            raise EtlError("ParseDate needs a format")
        if self.kind is TransformKind.COMPUTED:
            if not self.expression:
                raise EtlError("Computed needs an expression")
            parse_expression(self.expression)
        if self.case not in ("upper", "lower"):
            raise EtlError(f"case must be upper or lower, got {self.case!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "column": self.target_column}
        if self.format:
            d["format"] = self.format
        if self.expression:
            d["expression"] = self.expression
        if self.kind is TransformKind.CASE_FOLD:
            d["case"] = self.case
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ValueTransform":
        try:
            kind = TransformKind(d["kind"])
            return cls(kind, d["column"], d.get("format"), d.get("expression"), d.get("case", "upper"))
        except (KeyError, ValueError) as exc:
            raise EtlError(f"bad transform {d!r}: {exc}") from None


def load_transforms(path: Union[str, Path]) -> list[ValueTransform]:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or []
    if isinstance(data, dict):
        data = data.get("transforms", [])
    return [ValueTransform.from_dict(d) for d in data]


def transform_digest(transforms: Iterable[ValueTransform]) -> str:
    canonical = json.dumps([t.to_dict() for t in transforms], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TransformError:
    row_index: int
    column: str
    message: str


def parse_number(text: str) -> str:
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise EtlError(f"not a number: {text!r}") from None
    if not value.is_finite():
        raise EtlError(f"not a finite number: {text!r}")
    if value == value.to_integral_value():
        return str(int(value))
    return format(value.normalize(), "f")


_DATE_TOKENS = {"YYYY": r"(?P<Y>\d{4})", "MM": r"(?P<M>\d{1,2})", "DD": r"(?P<D>\d{1,2})",
                "HH": r"(?P<h>\d{1,2})", "mm": r"(?P<m>\d{1,2})", "ss": r"(?P<s>\d{1,2})"}


def _date_regex(fmt: str) -> re.Pattern:
    out, i = [], 0
    while i < len(fmt):
        for tok, rx in _DATE_TOKENS.items():
            if fmt.startswith(tok, i):
                out.append(rx)
                i += len(tok)
                break
        else:
            out.append(re.escape(fmt[i]))
            i += 1
    return re.compile("".join(out))


def parse_date(text: str, fmt: str) -> str:
    """Parse ``text`` with a YYYY/MM/DD/HH/mm/ss format into an ISO date or dateTime."""
    m = _date_regex(fmt).fullmatch(text.strip())
    if not m:
        raise EtlError(f"{text!r} does not match format {fmt!r}")
    g = m.groupdict()
    try:
        date = dt.date(int(g["Y"]), int(g["M"]), int(g["D"]))
        if g.get("h") is None:
            return date.isoformat()
        moment = dt.datetime.combine(date, dt.time(int(g["h"]), int(g.get("m") or 0), int(g.get("s") or 0)))
    except (TypeError, ValueError) as exc:
        raise EtlError(f"invalid date {text!r}: {exc}") from None
    return moment.isoformat()


# Computed-column expressions: func(arg, ...) | "string" | column reference.
_EXPR_TOKEN = re.compile(r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)|(?P<punct>[(),]))')
_FUNCTIONS = {"concat", "upper", "lower", "trim", "coalesce"}


def _tokenize_expression(text: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _EXPR_TOKEN.match(text, pos)
        if not m:
            raise EtlError(f"bad expression at offset {pos}: {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


def parse_expression(text: str):
    """Parse an expression into a nested tuple tree."""
    tokens = _tokenize_expression(text)
    pos = 0

    def expr():
        nonlocal pos
        if pos >= len(tokens):
            raise EtlError(f"unexpected end of expression: {text!r}")
        kind, value = tokens[pos]
        pos += 1
        if kind == "str":
            return ("lit", json.loads(value))
        if kind != "name":
            raise EtlError(f"unexpected {value!r} in expression {text!r}")
        if pos < len(tokens) and tokens[pos] == ("punct", "("):
            if value not in _FUNCTIONS:
                raise EtlError(f"unknown function {value!r}")
            pos += 1
            args = []
            if tokens[pos:pos + 1] != [("punct", ")")]:
                args.append(expr())
                while tokens[pos:pos + 1] == [("punct", ",")]:
                    pos += 1
                    args.append(expr())
            if tokens[pos:pos + 1] != [("punct", ")")]:
                raise EtlError(f"expected ')' in expression {text!r}")
            pos += 1
            return ("call", value, args)
        return ("col", value)

    tree = expr()
    if pos != len(tokens):
        raise EtlError(f"trailing input in expression {text!r}")
    return tree


def evaluate_expression(tree, row: dict) -> Optional[str]:
    kind = tree[0]
    if kind == "lit":
        return tree[1]
    if kind == "col":
        if tree[1] not in row:
            raise EtlError(f"unknown column {tree[1]!r} in expression")
        return row[tree[1]]
    name, args = tree[1], [evaluate_expression(a, row) for a in tree[2]]
    if name == "coalesce":
        return next((a for a in args if a is not None), None)
    if any(a is None for a in args):
        return None
    if name == "concat":
        return "".join(args)
    if len(args) != 1:
        raise EtlError(f"{name}() takes one argument")
    return {"upper": str.upper, "lower": str.lower, "trim": str.strip}[name](args[0])


def apply_transforms(frame: Frame, transforms: Iterable[ValueTransform],
                     errors: Optional[list] = None) -> Frame:
    """Apply ``transforms`` left to right; parse failures null the cell and go to ``errors``."""
    columns = list(frame.columns)
    rows = [list(r) for r in frame.rows]
    for t in transforms:
        if t.kind is TransformKind.COMPUTED:
            if t.target_column in columns:
                raise EtlError(f"computed column {t.target_column!r} already exists")
            tree = parse_expression(t.expression)
            for r in rows:
                r.append(evaluate_expression(tree, dict(zip(columns, r))))
            columns.append(t.target_column)
            continue
        if t.target_column not in columns:
            raise EtlError(f"unknown column {t.target_column!r}")
        i = columns.index(t.target_column)
        for n, r in enumerate(rows, 1):
            value = r[i]
            if value is None:
                continue
            try:
                if t.kind is TransformKind.TRIM:
                    value = value.strip()
                elif t.kind is TransformKind.CASE_FOLD:
                    value = value.upper() if t.case == "upper" else value.lower()
                elif t.kind is TransformKind.PARSE_NUMBER:
                    value = parse_number(value)
                else:
                    value = parse_date(value, t.format)
            except EtlError as exc:
                if errors is not None:
                    errors.append(TransformError(n, t.target_column, str(exc)))
                value = None
            r[i] = value if value != "" else None
    return Frame(columns, rows)


# -- shapes ----------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    header: str
    property: Optional[Iri] = None
    class_iri: Optional[Iri] = None
    datatype: Optional[Iri] = None
    min_count: int = 0
    max_count: Optional[int] = 1
    primary_key: bool = False
    reference_list: Optional[Iri] = None

    def __post_init__(self):
        if self.min_count < 0 or (self.max_count is not None and self.max_count < 0):
            raise EtlError(f"{self.header}: counts must be non-negative")
        if self.max_count is not None and self.min_count > self.max_count:
            raise EtlError(f"{self.header}: min_count {self.min_count} > max_count {self.max_count}")
        if self.class_iri is not None and self.datatype is not None:
            raise EtlError(f"{self.header}: a column is either a class instance or a literal, not both")
        if self.primary_key and self.class_iri is None:
            raise EtlError(f"{self.header}: the primary key must declare a class")

    @builtins.property  # the ``property`` field shadows the builtin here
    def kind(self) -> str:
        return "class" if self.class_iri is not None else "literal"


@dataclass(frozen=True)
class TableShape:
    name: str
    context: dict
    columns: tuple[ColumnSpec, ...]
    closed: bool = False

    @property
    def primary_key(self) -> ColumnSpec:
        keys = [c for c in self.columns if c.primary_key]
        if len(keys) != 1:
            raise EtlError(f"shape {self.name!r} has {len(keys)} primary keys")
        return keys[0]

    @property
    def key_type(self) -> str:
        return self.context.get("type", "subject")

    def minter(self, registry: SegmentRegistry) -> Minter:
        ctx = {k: v for k, v in self.context.items() if k in
               ("business_domain", "business_subdomain", "system_of_record", "timestamp", "release")}
        return Minter(registry, **ctx)

    @classmethod
    def from_dict(cls, data: dict) -> "TableShape":
        prefixes = dict(STANDARD_PREFIXES)
        prefixes.update(data.get("prefixes") or {})

        def iri(value):
            return Iri(expand_curie(value, prefixes)) if value else None

        cols = []
        for c in data.get("columns") or []:
            max_count = c.get("max_count", 1)
            cols.append(ColumnSpec(
                header=c["header"],
                property=iri(c.get("property")),
                class_iri=iri(c.get("class")),
                datatype=iri(c.get("datatype")) if c.get("datatype") else
                (None if c.get("class") else Iri(XSD + "string")),
                min_count=int(c.get("min_count", 0)),
                max_count=None if max_count in (None, "unbounded", "*") else int(max_count),
                primary_key=bool(c.get("primary_key", False)),
                reference_list=iri(c.get("reference_list")),
            ))
        try:
            return cls(data["name"], dict(data.get("context") or {}), tuple(cols), bool(data.get("closed", False)))
        except KeyError as exc:
            raise EtlError(f"shape is missing {exc}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TableShape":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})


# -- validation -------------------------------------------------------------------


class ViolationKind(enum.Enum):
    STRUCTURAL = "Structural"
    CARDINALITY = "Cardinality"
    DATATYPE = "Datatype"
    REFERENTIAL = "Referential"
    URI_SYNTAX = "UriSyntax"
    NEW_CLASS = "NewClass"


@dataclass(frozen=True)
class Violation:
    row_index: Optional[int]  # 1-based data row; None for table-level findings
    column: Optional[str]
    kind: ViolationKind
    message: str


REPORT_HEADER = ["row_index", "column", "kind", "message"]


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rows_with_violations(self) -> set[int]:
        return {v.row_index for v in self.violations if v.row_index is not None}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for v in self.violations:
            writer.writerow(["" if v.row_index is None else v.row_index, v.column or "", v.kind.value, v.message])
        return buf.getvalue()

    def to_text(self) -> str:
        if not self.violations:
            return "no violations\n"
        lines = []
        for v in self.violations:
            where = "table" if v.row_index is None else f"row {v.row_index}"
            if v.column:
                where += f", column {v.column}"
            lines.append(f"{where}: {v.kind.value}: {v.message}")
        lines.append(f"{len(self.violations)} violation(s)")
        return "\n".join(lines) + "\n"


def validate_structure(shape: TableShape) -> ValidationReport:
    report = ValidationReport()

    def add(column, message):
        report.violations.append(Violation(None, column, ViolationKind.STRUCTURAL, message))

    keys = [c for c in shape.columns if c.primary_key]
    if len(keys) != 1:
        add(None, f"expected exactly one primary key, found {len(keys)}")
    seen = set()
    for c in shape.columns:
        if c.header in seen:
            add(c.header, "duplicate column header")
        seen.add(c.header)
        if not c.primary_key and c.property is None:
            add(c.header, "non-key column has no property")
        for label, value in (("property", c.property), ("class", c.class_iri),
                             ("reference list", c.reference_list), ("datatype", c.datatype)):
            if value is not None and not is_valid_iri(value.value):
                add(c.header, f"{label} {value.value!r} is not a valid IRI")
        if c.datatype is not None and c.datatype.value not in KNOWN_DATATYPES:
            add(c.header, f"unknown datatype {c.datatype.value}")
    return report


_INTEGER = re.compile(r"[+-]?\d+")
_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)")
_DATETIME = re.compile(r"(\d{4}-\d{2}-\d{2})T(\d{2}):(\d{2})(:(\d{2})(\.\d+)?)?(Z|[+-]\d{2}:\d{2})?")


def valid_lexical(value: str, datatype: str) -> bool:
    """Lexical validity for the datatypes that are checked; others are accepted."""
    local = datatype[len(XSD):] if datatype.startswith(XSD) else ""
    if local == "integer":
        return bool(_INTEGER.fullmatch(value))
    if local == "decimal":
        return bool(_DECIMAL.fullmatch(value))
    if local == "boolean":
        return value in ("true", "false", "1", "0")
    if local == "date":
        try:
            dt.date.fromisoformat(value)
            return len(value) == 10
        except ValueError:
            return False
    if local == "dateTime":
        m = _DATETIME.fullmatch(value)
        if not m:
            return False
        try:
            dt.date.fromisoformat(m.group(1))
            dt.time(int(m.group(2)), int(m.group(3)), int(m.group(5) or 0))
        except ValueError:
            return False
        return True
    return True


def split_cell(value: Optional[str], delimiter: str) -> list[str]:
    if value is None:
        return []
    return [p.strip() for p in value.split(delimiter) if p.strip()]


def resolve_instance(store: GraphStore, value: str, class_iri: Optional[Iri] = None) -> Optional[Iri]:
    """Resolve a cell to an IRI: absolute IRIs directly, otherwise by exact label or notation.

    Candidates typed to ``class_iri`` win over other candidates.
    """
    if ABSOLUTE_IRI.match(value) and is_valid_iri(value):
        return Iri(value)
    candidates = set()
    for p in LABEL_PREDICATES:
        for q in store.match(None, p, Literal(value)):
            if type(q.subject) is Iri:
                candidates.add(q.subject)
    if not candidates:
        return None
    ranked = sorted(candidates, key=lambda c: (not _has_type(store, c, class_iri), c.value))
    return ranked[0]


def _has_type(store: GraphStore, node: Iri, class_iri: Optional[Iri]) -> bool:
    return class_iri is not None and any(True for _ in store.match(node, RDF_TYPE, class_iri))


def is_list_member(store: GraphStore, ref_list: Iri, node: Iri) -> bool:
    for q in store.match(ref_list, None, node):
        if q.predicate == SKOS_MEMBER or re.fullmatch(re.escape(RDF) + r"_\d+", q.predicate.value):
            return True
    return False


def validate_data(frame: Frame, shape: TableShape, store: Optional[GraphStore] = None, delimiter: str = "|",
                  record_level: bool = True) -> ValidationReport:
    """Check ``frame`` against ``shape``; with ``record_level`` off only table-level checks run."""
    report = validate_structure(shape)
    if report.violations:
        return report
    out = report.violations
    present = set(frame.columns)
    declared = [c.header for c in shape.columns]
    for c in shape.columns:
        if c.header not in present:
            out.append(Violation(None, c.header, ViolationKind.STRUCTURAL, "declared column is missing"))
    if shape.closed:
        for col in frame.columns:
            if col not in declared:
                out.append(Violation(None, col, ViolationKind.STRUCTURAL, "column not declared by closed shape"))
    if not record_level:
        return report
    specs = [c for c in shape.columns if c.header in present]
    seen_keys: dict[str, int] = {}
    warned = set()
    for n, row in enumerate(frame.rows, 1):
        cells = dict(zip(frame.columns, row))
        for c in specs:
            values = split_cell(cells[c.header], delimiter)
            if len(values) < c.min_count or (c.max_count is not None and len(values) > c.max_count):
                bound = "unbounded" if c.max_count is None else c.max_count
                out.append(Violation(n, c.header, ViolationKind.CARDINALITY,
                                     f"{len(values)} value(s), expected between {c.min_count} and {bound}"))
            if c.primary_key:
                for v in values:
                    if ABSOLUTE_IRI.match(v):
                        ok = is_valid_iri(v)
                    else:
                        ok = bool(TOKEN.fullmatch(v))
                    if not ok:
                        out.append(Violation(n, c.header, ViolationKind.URI_SYNTAX,
                                             f"{v!r} cannot form a governed IRI"))
                    elif v in seen_keys:
                        out.append(Violation(n, c.header, ViolationKind.STRUCTURAL,
                                             f"duplicate key {v!r} (first at row {seen_keys[v]})"))
                    else:
                        seen_keys[v] = n
                continue
            for v in values:
                if c.class_iri is None:
                    dtype = c.datatype.value
                    if dtype not in VALIDATED_DATATYPES:
                        if dtype not in warned:
                            warned.add(dtype)
                            report.warnings.append(f"{c.header}: datatype {dtype} is not lexically checked")
                    elif not valid_lexical(v, dtype):
                        out.append(Violation(n, c.header, ViolationKind.DATATYPE,
                                             f"{v!r} is not a valid {dtype[len(XSD):]}"))
                    continue
                _check_reference(out, store, n, c, v)
    return report


def _check_reference(out: list, store: Optional[GraphStore], n: int, c: ColumnSpec, v: str) -> None:
    if ABSOLUTE_IRI.match(v) and not is_valid_iri(v):
        out.append(Violation(n, c.header, ViolationKind.URI_SYNTAX, f"{v!r} is not a valid IRI"))
        return
    node = resolve_instance(store, v, c.class_iri) if store is not None else None
    cls = c.class_iri.value
    if node is None or not store.has_subject(node):
        out.append(Violation(n, c.header, ViolationKind.NEW_CLASS, f"{v!r} is not a known instance of {cls}"))
        return
    types = store.objects(node, RDF_TYPE)
    if c.class_iri in types:
        if c.reference_list is not None and not is_list_member(store, c.reference_list, node):
            out.append(Violation(n, c.header, ViolationKind.REFERENTIAL,
                                 f"{v!r} is not a member of reference list {c.reference_list.value}"))
        return
    if not types:
        out.append(Violation(n, c.header, ViolationKind.NEW_CLASS, f"{v!r} resolves to an untyped node"))
        return
    out.append(Violation(n, c.header, ViolationKind.REFERENTIAL,
                         f"{v!r} resolves to {node.value}, which is not a {cls}"))


# -- emission ----------------------------------------------------------------------


def key_iri(value: str, shape: TableShape, minter: Minter) -> Iri:
    if ABSOLUTE_IRI.match(value):
        if not is_valid_iri(value):
            raise EtlError(f"invalid key IRI {value!r}")
        return Iri(value)
    if not TOKEN.fullmatch(value):
        raise EtlError(f"key {value!r} is not a URI token")
    try:
        return minter.mint(shape.key_type, value)
    except UriError as exc:
        raise EtlError(f"cannot mint IRI for key {value!r}: {exc}") from None


def emit_rdf(frame: Frame, shape: TableShape, minter: Minter, store: Optional[GraphStore] = None,
             graph: Optional[Iri] = None, skip_rows: Iterable[int] = (), delimiter: str = "|") -> list[Quad]:
    """One rdf:type quad per row plus one quad per nonnull non-key value, in row/column order."""
    skip = set(skip_rows)
    g = graph or (store.default_graph if store is not None else Iri(minter.registry.authority + "/graphs/default"))
    key = shape.primary_key
    specs = [c for c in shape.columns if not c.primary_key and c.header in frame.columns]
    quads = []
    for n, row in enumerate(frame.rows, 1):
        if n in skip:
            continue
        cells = dict(zip(frame.columns, row))
        if cells.get(key.header) is None:
            raise EtlError(f"row {n}: empty primary key")
        subject = key_iri(cells[key.header], shape, minter)
        quads.append(Quad(subject, RDF_TYPE, key.class_iri, g))
        for c in specs:
            for v in split_cell(cells[c.header], delimiter):
                quads.append(Quad(subject, c.property, _object(v, c, store, n), g))
    return quads


def _object(value: str, c: ColumnSpec, store: Optional[GraphStore], n: int):
    if c.class_iri is None:
        if c.datatype is None or c.datatype.value == XSD + "string":
            return Literal(value)
        return typed(value, c.datatype.value[len(XSD):]) if c.datatype.value.startswith(XSD) \
            else Literal(value, c.datatype)
    node = resolve_instance(store, value, c.class_iri) if store is not None else (
        Iri(value) if ABSOLUTE_IRI.match(value) and is_valid_iri(value) else None)
    if node is None:
        raise EtlError(f"row {n}, column {c.header}: cannot resolve {value!r} to an instance")
    return node


# -- pipeline ----------------------------------------------------------------------


@dataclass
class PipelineResult:
    report: ValidationReport
    loaded: Optional[LoadReport]
    provenance: list[Quad]
    transform_errors: list[TransformError] = field(default_factory=list)
    skipped_rows: list[int] = field(default_factory=list)


def run_timestamp() -> dt.datetime:
    """Current UTC time, or ``$SOURCE_DATE_EPOCH`` when set (reproducible runs)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0)


def provenance_graph(store: GraphStore) -> Iri:
    return Iri(store.base + "/graphs/provenance")


def run_pipeline(source: Union[str, Path], transforms: list[ValueTransform], shape: TableShape,
                 store: GraphStore, minter: Minter, force: bool = False, delimiter: str = "|",
                 record_level: bool = True, timestamp: Optional[dt.datetime] = None) -> PipelineResult:
    """Extract, transform, validate, emit and load one dataset, recording provenance.

    Nothing is loaded when validation finds violations unless ``force`` is set,
    in which case rows with violations are skipped.
    """
    source = Path(source)
    errors: list[TransformError] = []
    frame = apply_transforms(extract(source), transforms, errors)
    report = validate_data(frame, shape, store, delimiter, record_level)
    for e in errors:
        report.violations.append(Violation(e.row_index, e.column, ViolationKind.DATATYPE, e.message))
    if not report.ok and not force:
        return PipelineResult(report, None, [], errors)
    if validate_structure(shape).violations:
        return PipelineResult(report, None, [], errors)
    skip = sorted(report.rows_with_violations())
    graph = graph_name(source.name, store.base)
    with store.write_lock:
        quads = emit_rdf(frame, shape, minter, store, graph, skip, delimiter)
        loaded = load(store, quads, source.name)
        moment = (timestamp or run_timestamp()).astimezone(dt.timezone.utc).replace(tzinfo=None)
        digest = transform_digest(transforms)
        stamp = moment.strftime("%Y%m%dT%H%M%SZ")
        activity = minter.mint("activity", "etl", shape.name, source.stem, stamp)
        pg = provenance_graph(store)
        provenance = [
            Quad(activity, RDF_TYPE, PROV_ACTIVITY, pg),
            Quad(activity, INPUT_SOURCE, Literal(source.name), pg),
            Quad(activity, PROV_USED, minter.mint("dataset", source.name), pg),
            Quad(activity, USED_SHAPE, Literal(shape.name), pg),
            Quad(activity, TRANSFORM_DIGEST, Literal(digest), pg),
            Quad(activity, PROV_STARTED, typed(moment.isoformat() + "Z", "dateTime"), pg),
            Quad(activity, PROV_GENERATED, graph, pg),
        ]
        store.add_all(provenance)
    return PipelineResult(report, loaded, provenance, errors, skip)

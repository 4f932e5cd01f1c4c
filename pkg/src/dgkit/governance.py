"""Governance cascade (principle -> issue -> rule -> target), executable checks,
anonymisation transforms and FAIR / governance reports."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
import hmac
import io
import random
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Mapping, Optional

from .etl import Frame
from .store import GraphStore
from .terms import DG, RDF, RDFS, SKOS, Iri, Literal, Quad, term_key, typed
from .uri import Minter, safe_token, validate_uri

RDF_TYPE = Iri(RDF + "type")
PREF_LABEL = Iri(SKOS + "prefLabel")
RDFS_LABEL = Iri(RDFS + "label")
PRINCIPLE = Iri(DG + "GovernancePrinciple")
ISSUE = Iri(DG + "GovernanceIssue")
RULE = Iri(DG + "GovernanceRule")
COVERS_ISSUE = Iri(DG + "coversIssue")
IS_ISSUE_OF = Iri(DG + "isIssueOf")
HAS_RULE = Iri(DG + "hasRule")
IS_RULE_OF = Iri(DG + "isRuleOf")
APPLIES_TO = Iri(DG + "appliesTo")
GOVERNED_BY = Iri(DG + "governedBy")
SOURCE_DOCUMENT = Iri(DG + "sourceDocument")
DESCRIPTION = Iri(DG + "description")
CHECK_KIND = Iri(DG + "checkKind")
CHECK_NAME = Iri(DG + "checkName")
NOISE_SCALE = Iri(DG + "noiseScale")
CHECK_SEED = Iri(DG + "checkSeed")
STUDY_ID = Iri(DG + "studyId")
VARIABLE_NAME = Iri(DG + "variableName")
AUDIT = Iri(DG + "AnonymisationAudit")
AUDIT_RULE = Iri(DG + "auditedRule")
AUDIT_COLUMN = Iri(DG + "auditedColumn")
AUDIT_TECHNIQUE = Iri(DG + "technique")
AUDIT_ROWS = Iri(DG + "rowsAffected")

_INVERSES = {COVERS_ISSUE: IS_ISSUE_OF, HAS_RULE: IS_RULE_OF, APPLIES_TO: GOVERNED_BY}


class GovernanceError(ValueError):
    pass


class CheckKind(enum.Enum):
    MISSING_VALUE = "MissingValue"
    SUPPRESSION = "Suppression"
    NOISE_ADDITION = "NoiseAddition"
    DATE_OFFSET = "DateOffset"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class CheckSpec:
    kind: CheckKind
    scale: Optional[float] = None
    seed: Optional[int] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind is CheckKind.NOISE_ADDITION and not (self.scale is not None and self.scale > 0):
            raise GovernanceError("NoiseAddition needs a positive scale")
        if self.kind is CheckKind.CUSTOM and not self.name:
            raise GovernanceError("Custom checks need a name")


@dataclass(frozen=True)
class GovernancePrinciple:
    uri: Iri
    name: str
    source_document: str = ""

    def __post_init__(self):
        if not self.name:
            raise GovernanceError("principle name must be nonempty")


@dataclass(frozen=True)
class GovernanceIssue:
    uri: Iri
    name: str


@dataclass(frozen=True)
class GovernanceRule:
    uri: Iri
    description: str
    check: CheckSpec
    targets: tuple[Iri, ...] = ()
    study_id: Optional[str] = None  # None means the rule applies generically

    def applies_to_study(self, study_id: Optional[str]) -> bool:
        return self.study_id is None or self.study_id == study_id


def governance_graph(store: GraphStore) -> Iri:
    return Iri(store.base + "/graphs/governance")


def _check_governed(uris, registry) -> None:
    if registry is None:
        return
    for u in uris:
        outcome = validate_uri(u, registry)
        if not outcome.ok:
            raise GovernanceError(f"{u.value}: {'; '.join(outcome.violations)}")


def _with_inverses(quads: list[Quad]) -> list[Quad]:
    out = list(quads)
    for q in quads:
        inv = _INVERSES.get(q.predicate)
        if inv is not None and type(q.object) is Iri:
            out.append(Quad(q.object, inv, q.subject, q.graph))
    return out


def link_cascade(store: GraphStore, principle: GovernancePrinciple, issue: GovernanceIssue,
                 rule: GovernanceRule, targets=None, registry=None, graph: Optional[Iri] = None) -> None:
    """Materialize principle -> issue -> rule -> targets, with inverse links."""
    targets = tuple(targets if targets is not None else rule.targets)
    if rule.check.kind is not CheckKind.CUSTOM and not targets:
        raise GovernanceError(f"{rule.description}: executable rules need at least one target")
    _check_governed((principle.uri, issue.uri, rule.uri), registry)
    g = graph or governance_graph(store)
    quads = [
        Quad(principle.uri, RDF_TYPE, PRINCIPLE, g),
        Quad(principle.uri, PREF_LABEL, Literal(principle.name), g),
        Quad(principle.uri, COVERS_ISSUE, issue.uri, g),
        Quad(issue.uri, RDF_TYPE, ISSUE, g),
        Quad(issue.uri, PREF_LABEL, Literal(issue.name), g),
        Quad(issue.uri, HAS_RULE, rule.uri, g),
        Quad(rule.uri, RDF_TYPE, RULE, g),
        Quad(rule.uri, PREF_LABEL, Literal(rule.description), g),
        Quad(rule.uri, CHECK_KIND, Literal(rule.check.kind.value), g),
    ]
    if principle.source_document:
        quads.append(Quad(principle.uri, SOURCE_DOCUMENT, Literal(principle.source_document), g))
    if rule.check.scale is not None:
        quads.append(Quad(rule.uri, NOISE_SCALE, typed(repr(float(rule.check.scale)), "double"), g))
    if rule.check.seed is not None:
        quads.append(Quad(rule.uri, CHECK_SEED, typed(int(rule.check.seed), "integer"), g))
    if rule.check.name:
        quads.append(Quad(rule.uri, CHECK_NAME, Literal(rule.check.name), g))
    if rule.study_id is not None:
        quads.append(Quad(rule.uri, STUDY_ID, Literal(rule.study_id), g))
    for t in targets:
        quads.append(Quad(rule.uri, APPLIES_TO, t, g))
    store.add_all(_with_inverses(quads))


def _linked(store: GraphStore, node, forward: Iri, backward: Iri) -> list:
    """Nodes linked by ``forward`` or, reading the other way, by ``backward``."""
    found = set(store.objects(node, forward)) | {q.subject for q in store.match(None, backward, node)}
    return sorted(found, key=term_key)


def _label(store: GraphStore, node) -> str:
    for p in (PREF_LABEL, RDFS_LABEL):
        v = store.value(node, p)
        if isinstance(v, Literal):
            return v.lexical
    return node.value if type(node) is Iri else str(node)


def rules_for(store: GraphStore, target: Iri) -> list[Iri]:
    return _linked(store, target, GOVERNED_BY, APPLIES_TO)


def principles_governing(store: GraphStore, target: Iri) -> list[Iri]:
    """Principles reachable backwards from ``target`` through rule and issue links."""
    found = set()
    for rule in rules_for(store, target):
        for issue in _linked(store, rule, IS_RULE_OF, HAS_RULE):
            found.update(_linked(store, issue, IS_ISSUE_OF, COVERS_ISSUE))
    return sorted(found, key=term_key)


def _literal(store, s, p) -> Optional[str]:
    v = store.value(s, p)
    return v.lexical if isinstance(v, Literal) else None


def read_rule(store: GraphStore, uri: Iri) -> GovernanceRule:
    if not any(True for _ in store.match(uri, RDF_TYPE, RULE)):
        raise GovernanceError(f"unknown rule {uri.value}")
    kind = CheckKind(_literal(store, uri, CHECK_KIND) or "Custom")
    scale = _literal(store, uri, NOISE_SCALE)
    seed = _literal(store, uri, CHECK_SEED)
    name = _literal(store, uri, CHECK_NAME)
    if kind is CheckKind.CUSTOM and not name:
        name = _label(store, uri)
    return GovernanceRule(
        uri=uri,
        description=_label(store, uri),
        check=CheckSpec(kind, float(scale) if scale else None, int(seed) if seed else None, name),
        targets=tuple(_linked(store, uri, APPLIES_TO, GOVERNED_BY)),
        study_id=_literal(store, uri, STUDY_ID),
    )


def read_rules(store: GraphStore) -> list[GovernanceRule]:
    return [read_rule(store, q.subject) for q in sorted(store.match(None, RDF_TYPE, RULE), key=lambda q: term_key(q.subject))]


# -- checks ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckFinding:
    rule: Iri
    kind: str  # MissingValue, Unmappable or NotADetector
    column: Optional[str]
    row_index: Optional[int]  # 1-based data row
    message: str


CHECK_HEADER = ["rule", "kind", "column", "row_index", "message"]


@dataclass
class CheckReport:
    findings: list[CheckFinding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def count(self, kind: str = "MissingValue", column: Optional[str] = None) -> int:
        return sum(1 for f in self.findings if f.kind == kind and (column is None or f.column == column))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CHECK_HEADER)
        for f in self.findings:
            writer.writerow([f.rule.value, f.kind, f.column or "", "" if f.row_index is None else f.row_index, f.message])
        return buf.getvalue()

    def to_text(self) -> str:
        if not self.findings:
            return "no findings\n"
        lines = [f"{f.kind}: {f.column or '-'} row {f.row_index if f.row_index is not None else '-'}: {f.message}"
                 for f in self.findings]
        lines.append(f"{len(self.findings)} finding(s)")
        return "\n".join(lines) + "\n"


def default_column(store: GraphStore, target: Iri) -> Optional[str]:
    """Column name for a target: its variable name, else the last token of its label."""
    name = _literal(store, target, VARIABLE_NAME)
    if name:
        return name
    label = _literal(store, target, PREF_LABEL)
    if label:
        return re.split(r"[.\s]", label.split(" [", 1)[0])[-1]
    return None


def run_checks(store: GraphStore, frame: Frame, variable_column_map: Optional[Mapping[Iri, str]] = None,
               study_id: Optional[str] = None, rules: Optional[list[GovernanceRule]] = None) -> CheckReport:
    """Run every applicable detector rule against ``frame``.

    Targets that map to no column are reported as ``Unmappable`` findings;
    transform-only kinds are reported as ``NotADetector``.
    """
    report = CheckReport()
    mapping = dict(variable_column_map or {})
    for rule in rules if rules is not None else read_rules(store):
        if not rule.applies_to_study(study_id):
            continue
        if rule.check.kind is not CheckKind.MISSING_VALUE:
            report.findings.append(CheckFinding(rule.uri, "NotADetector", None, None,
                                                f"{rule.check.kind.value} is a transform, not a detector"))
            continue
        for target in rule.targets:
            column = mapping.get(target) or default_column(store, target)
            if column is None or column not in frame.columns:
                report.findings.append(CheckFinding(rule.uri, "Unmappable", column, None,
                                                    f"target {target.value} maps to no dataset column"))
                continue
            for n, value in enumerate(frame.column(column), 1):
                if value is None or value == "":
                    report.findings.append(CheckFinding(rule.uri, "MissingValue", column, n, "missing value"))
    return report


# -- anonymisation ------------------------------------------------------------------


def subject_offset(seed: int, subject_id: str) -> int:
    """Per-subject day offset in [1, 365] from a keyed hash of (seed, subject_id)."""
    digest = hmac.new(str(seed).encode("utf-8"), subject_id.encode("utf-8"), hashlib.sha256).digest()
    return int.from_bytes(digest[:8], "big") % 365 + 1


_DATE_CELL = re.compile(r"(\d{4}-\d{2}-\d{2})(T.*)?")


def shift_date(value: str, days: int) -> str:
    m = _DATE_CELL.fullmatch(value.strip())
    if not m:
        raise GovernanceError(f"DateOffset on non-date value {value!r}")
    try:
        date = dt.date.fromisoformat(m.group(1))
    except ValueError:
        raise GovernanceError(f"DateOffset on invalid date {value!r}") from None
    return (date + dt.timedelta(days=days)).isoformat() + (m.group(2) or "")


def _format_number(value: Decimal) -> str:
    text = format(value.quantize(Decimal("0.000001")), "f")
    return text.rstrip("0").rstrip(".") if "." in text else text


@dataclass
class AnonymisationResult:
    frame: Frame
    audit: list[Quad]


def anonymise(frame: Frame, rules: list[GovernanceRule], seed: int,
              column_map: Optional[Mapping[Iri, str]] = None, subject_column: str = "USUBJID",
              redaction_token: str = "[REDACTED]", store: Optional[GraphStore] = None,
              study_id: Optional[str] = None, audit_graph: Optional[Iri] = None) -> AnonymisationResult:
    """Apply suppression, noise and date-offset rules; audit quads name rule, column and technique only."""
    mapping = dict(column_map or {})
    columns = list(frame.columns)
    rows = [list(r) for r in frame.rows]
    g = audit_graph or (Iri(store.base + "/graphs/audit") if store is not None else Iri("urn:dgkit:audit"))
    audit: list[Quad] = []
    for rule in rules:
        kind = rule.check.kind
        if kind in (CheckKind.MISSING_VALUE, CheckKind.CUSTOM):
            raise GovernanceError(f"{rule.description}: {kind.value} is not an anonymisation transform")
        if not rule.applies_to_study(study_id):
            continue
        for target in rule.targets:
            column = mapping.get(target) or (default_column(store, target) if store is not None else None)
            if column is None or column not in columns:
                raise GovernanceError(f"{rule.description}: target {target.value} maps to no dataset column")
            i = columns.index(column)
            touched = 0
            if kind is CheckKind.SUPPRESSION:
                for r in rows:
                    r[i] = redaction_token
                    touched += 1
            elif kind is CheckKind.NOISE_ADDITION:
                rng = random.Random(f"{rule.check.seed if rule.check.seed is not None else seed}|{rule.uri.value}|{column}")
                scale = Decimal(repr(rule.check.scale))
                for r in rows:
                    if r[i] is None:
                        continue
                    try:
                        value = Decimal(r[i].strip())
                    except InvalidOperation:
                        raise GovernanceError(f"NoiseAddition on non-numeric value {r[i]!r} in {column}") from None
                    noise = Decimal(repr(rng.uniform(-1.0, 1.0))) * scale
                    r[i] = _format_number(value + noise)
                    touched += 1
            else:
                if subject_column not in columns:
                    raise GovernanceError(f"DateOffset needs a {subject_column!r} column")
                s = columns.index(subject_column)
                for r in rows:
                    if r[i] is None:
                        continue
                    r[i] = shift_date(r[i], subject_offset(seed, r[s]))
                    touched += 1
            node = Iri(f"{rule.uri.value}/audit/{safe_token(column)}")
            audit += [
                Quad(node, RDF_TYPE, AUDIT, g),
                Quad(node, AUDIT_RULE, rule.uri, g),
                Quad(node, AUDIT_COLUMN, Literal(column), g),
                Quad(node, AUDIT_TECHNIQUE, Literal(kind.value), g),
                Quad(node, AUDIT_ROWS, typed(touched, "integer"), g),
            ]
    return AnonymisationResult(Frame(columns, rows), audit)


# -- reports ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FairRow:
    dataset: Iri
    findable: bool
    accessible: bool
    interoperable: bool
    reusable: bool
    gaps: tuple[str, ...]

    @property
    def score(self) -> int:
        return sum((self.findable, self.accessible, self.interoperable, self.reusable))


FAIR_HEADER = ["dataset", "findable", "accessible", "interoperable", "reusable", "score", "gaps"]


def fair_report(store: GraphStore, datasets: list[Iri], facets: Mapping[str, Mapping[str, Iri]],
                registry=None) -> list[FairRow]:
    """Derive the four FAIR flags per dataset from predicate presence.

    ``facets`` maps accessible/interoperable/reusable to {annotation name: predicate};
    a facet holds when every listed annotation is present. Findability means
    the dataset IRI is governed (when a registry is given) and described in the store.
    """
    rows = []
    for ds in datasets:
        if not store.has_subject(ds):
            raise GovernanceError(f"unknown dataset {ds.value}")
        gaps = []
        findable = registry is None or validate_uri(ds, registry).ok
        if not findable:
            gaps.append("governed identifier")
        flags = {}
        for facet in ("accessible", "interoperable", "reusable"):
            ok = True
            for name, predicate in sorted((facets.get(facet) or {}).items()):
                if store.value(ds, predicate) is None:
                    ok = False
                    gaps.append(name)
            flags[facet] = ok and bool(facets.get(facet))
        rows.append(FairRow(ds, findable, flags["accessible"], flags["interoperable"], flags["reusable"], tuple(gaps)))
    return rows


def fair_csv(rows: list[FairRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FAIR_HEADER)
    for r in rows:
        writer.writerow([r.dataset.value] + [str(b).lower() for b in
                                             (r.findable, r.accessible, r.interoperable, r.reusable)]
                        + [r.score, ";".join(r.gaps)])
    return buf.getvalue()


def fair_text(rows: list[FairRow]) -> str:
    lines = []
    for r in rows:
        gaps = ", ".join(r.gaps) if r.gaps else "none"
        lines.append(f"{r.dataset.value}: score {r.score}/4; gaps: {gaps}")
    return "\n".join(lines) + ("\n" if lines else "")


GOVERNANCE_HEADER = ["principle", "issue", "rule", "check", "target"]


@dataclass
class GovernanceReport:
    rows: list[list[str]]
    violations: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GOVERNANCE_HEADER)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [" / ".join(r) for r in self.rows]
        lines += [f"violation: {v}" for v in self.violations]
        return "\n".join(lines) + ("\n" if lines else "")


def governance_report(store: GraphStore) -> GovernanceReport:
    """Dump the cascade and flag rules or issues not reachable from any principle."""
    rows = []
    reached_rules, reached_issues = set(), set()
    principles = sorted({q.subject for q in store.match(None, RDF_TYPE, PRINCIPLE)},
                        key=lambda p: (_label(store, p), p.value))
    for p in principles:
        for issue in sorted(_linked(store, p, COVERS_ISSUE, IS_ISSUE_OF), key=lambda i: (_label(store, i), i.value)):
            reached_issues.add(issue)
            for rule in sorted(_linked(store, issue, HAS_RULE, IS_RULE_OF), key=lambda r: (_label(store, r), r.value)):
                reached_rules.add(rule)
                kind = _literal(store, rule, CHECK_KIND) or ""
                targets = _linked(store, rule, APPLIES_TO, GOVERNED_BY)
                for t in targets or [None]:
                    rows.append([_label(store, p), _label(store, issue), _label(store, rule), kind,
                                 "" if t is None else _label(store, t)])
    violations = []
    for rule in sorted({q.subject for q in store.match(None, RDF_TYPE, RULE)} - reached_rules, key=term_key):
        violations.append(f"orphan rule {_label(store, rule)} ({rule.value}) is not reachable from any principle")
    for issue in sorted({q.subject for q in store.match(None, RDF_TYPE, ISSUE)} - reached_issues, key=term_key):
        violations.append(f"orphan issue {_label(store, issue)} ({issue.value}) belongs to no principle")
    return GovernanceReport(rows, violations)


def resolve_target(store: GraphStore, text: str) -> Iri:
    """An IRI, or the node whose prefLabel is ``text`` (or starts with ``text [``)."""
    text = text.strip()
    if re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*://", text):
        return Iri(text)
    hits = {q.subject for q in store.match(None, PREF_LABEL, Literal(text)) if type(q.subject) is Iri}
    if not hits:
        for q in store.match(None, PREF_LABEL, None):
            if isinstance(q.object, Literal) and q.object.lexical.split(" [", 1)[0] == text:
                hits.add(q.subject)
    if len(hits) != 1:
        raise GovernanceError(f"target {text!r} matches {len(hits)} nodes")
    return next(iter(hits))


def _infer_kind(rule_name: str) -> CheckSpec:
    if "missing" in rule_name.lower():
        return CheckSpec(CheckKind.MISSING_VALUE)
    for kind in (CheckKind.SUPPRESSION, CheckKind.DATE_OFFSET):
        if kind.value.lower() in rule_name.lower().replace(" ", ""):
            return CheckSpec(kind)
    return CheckSpec(CheckKind.CUSTOM, name=rule_name)


def import_cascade_csv(store: GraphStore, text: str, minter: Minter, graph: Optional[Iri] = None) -> int:
    """Load a principle,issue,rule,target CSV (optional fifth column: check kind).

    Returns the number of cascade rows linked.
    """
    reader = csv.reader(io.StringIO(text))
    header = [h.strip().lower() for h in next(reader, [])]
    if header[:4] != ["principle", "issue", "rule", "target"]:
        raise GovernanceError("cascade CSV header must start with principle,issue,rule,target")
    count = 0
    for n, row in enumerate(reader, 1):
        if not any(c.strip() for c in row):
            continue
        if len(row) < 4:
            raise GovernanceError(f"cascade row {n}: expected 4 columns, found {len(row)}")
        p_name, i_name, r_name, target = (c.strip() for c in row[:4])
        check = CheckSpec(CheckKind(row[4].strip())) if len(row) > 4 and row[4].strip() else _infer_kind(r_name)
        principle = GovernancePrinciple(minter.mint("principle", p_name), p_name)
        issue = GovernanceIssue(minter.mint("issue", i_name), i_name)
        targets = (resolve_target(store, target),) if target else ()
        rule = GovernanceRule(minter.mint("rule", r_name), r_name, check, targets)
        link_cascade(store, principle, issue, rule, targets, minter.registry, graph)
        count += 1
    return count

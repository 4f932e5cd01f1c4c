"""Acceptance suite: one test per criterion, each recorded as a PASS/FAIL line in the terminal summary."""

import datetime as dt
import json
import random
import time
from collections import Counter
from contextlib import contextmanager

import pytest
from hypothesis import given, settings

from dgkit import etl, governance, lineage, sparql
from dgkit.config import load_file
from dgkit.governance import (CheckKind, CheckSpec, GovernanceIssue, GovernancePrinciple, GovernanceRule,
                              anonymise, import_cascade_csv, link_cascade, run_checks)
from dgkit.lineage import ClinicalRecord, RuleKind
from dgkit.nquads import parse_nquads, serialize_nquads
from dgkit.sparql import evaluate, parse_query, run_query, to_sparql_json
from dgkit.store import GraphStore, graph_name
from dgkit.terminology import get_concept, get_reference_list
from dgkit.terms import DG, RDF, SKOS, XSD, Iri, Literal, Quad, integer
from dgkit.turtle import parse_turtle, serialize_turtle
from dgkit.uri import build_uri, parse_uri

from conftest import ACCEPTANCE, FIXTURES, GOLDEN
from expected import INPUT_STAGES, LINEAGE_ROWS, OUTPUT_STAGES, SEX_MEMBERS, SEX_SOURCES
from oracles import brute_force, null_count, random_quads, random_query, study_day_oracle, table_bag
from strategies import GRAPH, governed_parts, graphs, quad_sets


@contextmanager
def criterion(n, title):
    """Record the outcome of criterion ``n``; ``detail`` entries are shown in the summary line."""
    detail: list[str] = []
    try:
        yield detail
    except BaseException as exc:
        detail.append(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"[:160])
        ACCEPTANCE[n] = (False, title, "; ".join(detail))
        print(f"criterion {n}: FAIL {title}")
        raise
    ACCEPTANCE[n] = (True, title, "; ".join(detail) or "ok")
    print(f"criterion {n}: PASS {title}")


def var(store, label):
    return lineage.variable_uri(store, label)


# 1 ---------------------------------------------------------------------------------


def test_criterion_01_lineage_table_reproduction(cfg):
    with criterion(1, "lineage roll-up reproduces the reference table") as detail:
        t0 = time.perf_counter()
        store = cfg.open_store()
        table = lineage.conceptual_rollup(store, "AE.AEEN")
        csv_text = lineage.rollup_csv(table)
        elapsed = time.perf_counter() - t0
        rows = [list(r) for r in table.strings()]
        assert len(rows) == 8
        assert [r[0] for r in rows] == INPUT_STAGES
        assert [r[5] for r in rows] == OUTPUT_STAGES
        assert Counter(tuple(r) for r in rows) == Counter(tuple(r) for r in LINEAGE_ROWS)
        assert Counter(r[2] for r in rows) == {"NCDS COPY_ELEMENT": 4, "NCDS DTC": 2, "NCDS DTN": 1,
                                               "NCDS STUDY_DAY": 1}
        keys = [(int(r[0]), int(r[5]), r[1], r[4]) for r in rows]
        assert keys == sorted(keys)
        assert csv_text.encode("utf-8") == (GOLDEN / "ae_end_lineage.csv").read_bytes()
        assert elapsed < 1.0, f"{elapsed:.3f}s"
        detail.append(f"8 rows, golden bytes equal, {elapsed * 1000:.0f} ms including load")


# 2 ---------------------------------------------------------------------------------


def test_criterion_02_sex_mapping_traversal(store):
    with criterion(2, "sex sources reach SD.DM.SEX; reference list members") as detail:
        sink = var(store, "SD.DM.SEX")
        for source in SEX_SOURCES:
            paths = lineage.business_lineage(store, var(store, source), sink)
            assert paths, f"no path from {source}"
        v = lineage.get_variable(store, sink)
        rl = get_reference_list(store, v.reference_list)
        assert rl.name == "SEX"
        assert {get_concept(store, m).pref_label for m in rl.members} == SEX_MEMBERS
        assert len(rl.members) == len(SEX_MEMBERS)
        detail.append(f"{len(SEX_SOURCES)} sources, {len(rl.members)} members")


# 3 ---------------------------------------------------------------------------------


def test_criterion_03_study_day_semantics(store):
    with criterion(3, "StudyDay over reference +/- 30 days") as detail:
        t0 = time.perf_counter()
        d = lineage.get_derivation(store, lineage.producing(store, var(store, "DR.AE.AEENDY"))[0])
        assert d.rule_kind is RuleKind.STUDY_DAY
        references = [dt.date(2004, 5, 21), dt.date(2000, 2, 29), dt.date(2019, 12, 31), dt.date(2021, 3, 1)]
        checked = 0
        for ref in references:
            values = []
            for k in range(-30, 31):
                event = ref + dt.timedelta(days=k)
                for clock in ("00:00", "13:45", "23:59"):
                    number = lineage.datetime_number(f"{event.isoformat()}T{clock}")
                    out = lineage.execute_derivation(d, ClinicalRecord("S", {"AEENDTN": number}),
                                                     {"reference_start": ref.isoformat()})
                    value = out.cells["AEENDY"]
                    assert value == study_day_oracle(event, ref), (event, ref, value)
                    assert value != 0
                    checked += 1
                values.append(value)
            assert values[30] == 1 and values[29] == -1
            steps = [b - a for a, b in zip(values, values[1:])]
            assert steps.count(2) == 1 and all(s in (1, 2) for s in steps)
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0, f"{elapsed:.3f}s"
        detail.append(f"{checked} evaluations, {elapsed * 1000:.0f} ms")


# 4 ---------------------------------------------------------------------------------


def _study_days(store, frame):
    records = lineage.read_records(frame.to_csv())
    out = lineage.execute_pipeline(store, records, var(store, "DR.AE.AEENDY"), {"study_day_ref_var": "RFSTDTC"})
    return {r.subject_id: r.cells["AEENDY"] for r in out}


def test_criterion_04_anonymisation_soundness(store, minter):
    with criterion(4, "DateOffset preserves StudyDay; anonymise deterministic") as detail:
        frame = etl.extract(FIXTURES / "ae_records.csv")
        targets = {"AEENDAT": Iri("http://example.org/col/AEENDAT"), "RFSTDTC": Iri("http://example.org/col/RFSTDTC")}
        rule = GovernanceRule(minter.mint("rule", "offset-dates"), "offset dates", CheckSpec(CheckKind.DATE_OFFSET),
                              tuple(targets.values()))
        cmap = {v: k for k, v in targets.items()}
        first = anonymise(frame, [rule], 1234, cmap)
        second = anonymise(frame, [rule], 1234, cmap)
        assert first.frame.rows == second.frame.rows and first.audit == second.audit
        assert first.frame.column("AEENDAT") != frame.column("AEENDAT")
        before, after = _study_days(store, frame), _study_days(store, first.frame)
        same = sum(1 for k in before if before[k] == after[k])
        assert same == len(before) == len(frame.rows)
        detail.append(f"{same}/{len(before)} rows preserved")


# 5 ---------------------------------------------------------------------------------


def test_criterion_05_validation_pipeline(store):
    with criterion(5, "planted violations found exactly; clean twin empty") as detail:
        shape = etl.TableShape.load(FIXTURES / "demographics_shape.yaml")
        dirty = etl.validate_data(etl.extract(FIXTURES / "demographics_dirty.csv"), shape, store)
        got = sorted((v.row_index or 0, v.column, v.kind.value) for v in dirty.violations)
        assert got == [(0, "EXTRA", "Structural"), (2, "SEX", "Cardinality"), (3, "AGE", "Datatype"),
                       (4, "COUNTRY", "Referential"), (5, "USUBJID", "UriSyntax"), (6, "SEX", "NewClass")]
        clean = etl.validate_data(etl.extract(FIXTURES / "demographics_clean.csv"), shape, store)
        assert clean.violations == []
        detail.append("6 findings, clean report empty")


# 6 ---------------------------------------------------------------------------------


def test_criterion_06_loader_semantics(tmp_path):
    with criterion(6, "spog dedup, clear-on-reload, inverse materialization") as detail:
        store = GraphStore()
        p = tmp_path / "data.ttl"
        p.write_text("@prefix ex: <http://ex.org/> .\nex:a ex:p ex:b .\nex:a ex:p ex:b .\nex:a ex:p ex:c .\n")
        r1 = load_file(store, p)
        r2 = load_file(store, p)
        assert (r1.added, r1.deduped) == (2, 1) and r1 == r2 and len(store) == 2

        p.write_text("@prefix ex: <http://ex.org/> .\nex:a ex:p ex:1 .\nex:a ex:p ex:2 .\nex:a ex:p ex:3 .\n")
        load_file(store, p)
        assert len(list(store.match(g=graph_name("data.ttl")))) == 3
        p.write_text("@prefix ex: <http://ex.org/> .\nex:a ex:p ex:1 .\nex:a ex:p ex:2 .\n")
        load_file(store, p)
        assert len(list(store.match(g=graph_name("data.ttl")))) == 2

        o = tmp_path / "onto.ttl"
        o.write_text("@prefix owl: <http://www.w3.org/2002/07/owl#> .\n@prefix dg: <https://ontology.example.org/dg#> .\n"
                     "dg:hasOutput owl:inverseOf dg:isOutputOf .\n")
        load_file(store, o)
        d = tmp_path / "lineage.nq"
        d.write_text("".join(f"<http://ex.org/d{i}> <{DG}hasOutput> <http://ex.org/v{i % 3}> .\n" for i in range(5))
                     + f"<http://ex.org/v9> <{DG}isOutputOf> <http://ex.org/d9> .\n")
        r = load_file(store, d)
        fwd = {(q.subject, q.object) for q in store.match(p=Iri(DG + "hasOutput"))}
        bwd = {(q.object, q.subject) for q in store.match(p=Iri(DG + "isOutputOf"))}
        assert fwd == bwd and len(fwd) == 6 and r.inversed == 6
        detail.append("dedup 1, reload leaves 2 quads, 6/6 inverse pairs")


# 7 ---------------------------------------------------------------------------------


def test_criterion_07_parser_round_trips(cfg):
    with criterion(7, "Turtle, N-Quads and governed-URI round trips (1000 cases each)") as detail:
        counts = Counter()

        @settings(max_examples=1000, deadline=None, database=None)
        @given(quad_sets())
        def turtle(quads):
            counts["turtle"] += 1
            once = set(parse_turtle(serialize_turtle(quads), GRAPH))
            assert once == quads
            assert set(parse_turtle(serialize_turtle(once), GRAPH)) == once

        @settings(max_examples=1000, deadline=None, database=None)
        @given(quad_sets(graphs))
        def nquads(quads):
            counts["nquads"] += 1
            once = set(parse_nquads(serialize_nquads(quads), GRAPH))
            assert once == quads
            assert set(parse_nquads(serialize_nquads(once), GRAPH)) == once

        @settings(max_examples=1000, deadline=None, database=None)
        @given(governed_parts(cfg.registry))
        def uris(parts):
            counts["uri"] += 1
            assert parse_uri(build_uri(parts, cfg.registry), cfg.registry) == parts

        turtle()
        nquads()
        uris()
        assert min(counts.values()) >= 1000, dict(counts)
        detail.append(", ".join(f"{k} {v}" for k, v in sorted(counts.items())))


# 8 ---------------------------------------------------------------------------------


def _permuted(query, rng):
    patterns = list(query.patterns)
    rng.shuffle(patterns)
    return sparql.Query(query.prefixes, query.select_vars, query.distinct, patterns, query.filters,
                        query.order_by, query.order_desc, query.limit, query.offset)


def test_criterion_08_query_oracle_equivalence():
    with criterion(8, "evaluate() equals brute force on 500 random cases") as detail:
        rng = random.Random(8)
        cases = 0
        for _ in range(500):
            store = GraphStore()
            store.add_all(random_quads(rng, rng.randint(0, 200)))
            assert len(store) <= 200
            text = random_query(rng)
            query = parse_query(text)
            assert len(query.patterns) <= 4
            result = evaluate(query, store)
            assert table_bag(result) == brute_force(query, store), text
            distinct = parse_query(text.replace("SELECT DISTINCT ", "SELECT ").replace("SELECT ", "SELECT DISTINCT ", 1))
            once = evaluate(distinct, store)
            assert len(set(once.values())) == len(once)
            assert set(once.values()) == set(result.values())
            for _ in range(3):
                assert table_bag(evaluate(_permuted(query, rng), store)) == table_bag(result), text
            cases += 1
        assert cases >= 500
        detail.append(f"{cases} cases")


# 9 ---------------------------------------------------------------------------------


def test_criterion_09_governance_cascade(store, minter):
    with criterion(9, "ALCOA+ cascade round trip; MissingValue matches null count") as detail:
        import_cascade_csv(store, (FIXTURES / "governance.csv").read_text(), minter)
        report = governance.governance_report(store)
        assert report.rows == [["ALCOA+", "Completeness", "Missing value check", "MissingValue", "AE.AEDECOD"]]
        assert report.violations == []
        target = governance.resolve_target(store, "AE.AEDECOD")
        [rule_uri] = governance.rules_for(store, target)
        rule = governance.read_rule(store, rule_uri)

        fresh = GraphStore()
        principle = GovernancePrinciple(minter.mint("principle", "ALCOA+"), "ALCOA+")
        issue = GovernanceIssue(minter.mint("issue", "Completeness"), "Completeness")
        fresh.add(Quad(target, Iri(SKOS + "prefLabel"), Literal("AE.AEDECOD"), fresh.default_graph))
        link_cascade(fresh, principle, issue, rule, registry=minter.registry)
        assert governance.read_rule(fresh, rule_uri) == rule
        assert governance.governance_report(fresh).rows == report.rows

        rng = random.Random(9)
        for _ in range(20):
            n = rng.randint(0, 40)
            values = [rng.choice([None, "", "x", "Headache", "Nausea"]) for _ in range(n)]
            frame = etl.Frame(["USUBJID", "AEDECOD"], [[f"S{i}", v] for i, v in enumerate(values)])
            found = run_checks(store, frame).count("MissingValue", "AEDECOD")
            assert found == null_count(values)
        detail.append("cascade round-trips; 20 frames agree")


# 10 --------------------------------------------------------------------------------


def synthetic_store(n_vars=10_000, n_derivations=25_000, vars_per_concept=10):
    store = GraphStore()
    g = Iri(store.base + "/graphs/synthetic")
    base = store.base + "/r1/development/clinical/ucm/v1"
    t, label, broader = Iri(RDF + "type"), Iri(SKOS + "prefLabel"), Iri(SKOS + "broader")
    quads = []
    concepts = [Iri(f"{base}/conceptualelement/C{i:04d}") for i in range(n_vars // vars_per_concept)]
    for i, c in enumerate(concepts):
        quads += [Quad(c, t, Iri(SKOS + "Concept"), g), Quad(c, label, Literal(f"SYN.C{i:04d}"), g)]
    variables = [Iri(f"{base}/fullyqualifiedelement/V{i:05d}") for i in range(n_vars)]
    for i, v in enumerate(variables):
        quads += [
            Quad(v, t, lineage.VARIABLE, g),
            Quad(v, label, Literal(f"SYN.V{i:05d} [Synthetic {i}]"), g),
            Quad(v, lineage.DATA_STAGE, integer(4 + i % 4), g),
            Quad(v, broader, concepts[i // vars_per_concept], g),
        ]
    rng = random.Random(10)
    for k in range(n_derivations):
        d = Iri(f"{base}/derivation/D{k:05d}")
        out = variables[k % n_vars]
        inp = variables[rng.randrange(n_vars)]
        quads += [
            Quad(d, t, lineage.DERIVATION, g),
            Quad(d, label, Literal(f"OPAQUE {k}"), g),
            Quad(d, lineage.TRANSFORMATION_RULE, Literal(f"opaque rule {k}"), g),
            Quad(d, lineage.RULE_KIND, Literal(RuleKind.OPAQUE.value), g),
            Quad(d, Iri(RDF + "_1"), inp, g),
            Quad(inp, lineage.IS_INPUT_OF, d, g),
            Quad(d, lineage.HAS_OUTPUT, out, g),
            Quad(out, lineage.IS_OUTPUT_OF, d, g),
        ]
    store.add_all(quads)
    return store, variables


def test_criterion_10_scale():
    with criterion(10, "10k variables, 25k opaque derivations: roll-up < 5 s, match(p) < 10 ms") as detail:
        store, variables = synthetic_store()
        assert sum(1 for _ in store.match(p=Iri(RDF + "type"), o=lineage.VARIABLE)) == 10_000
        assert sum(1 for _ in store.match(p=Iri(RDF + "type"), o=lineage.DERIVATION)) == 25_000
        t0 = time.perf_counter()
        table = lineage.conceptual_rollup(store, r"^SYN\.C000\d$")
        elapsed = time.perf_counter() - t0
        outputs = {r[4] for r in table.strings()}
        assert len(outputs) == 100
        assert len(table) == sum(1 for v in variables[:100] for _ in store.match(p=lineage.HAS_OUTPUT, o=v))
        assert elapsed < 5.0, f"roll-up {elapsed:.2f}s"
        worst = 0.0
        for p in (lineage.HAS_OUTPUT, lineage.IS_INPUT_OF, Iri(SKOS + "prefLabel"), lineage.DATA_STAGE,
                  Iri(RDF + "type"), lineage.TRANSFORMATION_RULE):
            s = time.perf_counter()
            n = sum(1 for _ in store.match(p=p))
            worst = max(worst, time.perf_counter() - s)
            assert n > 0
        assert worst < 0.010, f"match {worst * 1000:.1f} ms"
        detail.append(f"{len(store)} quads; roll-up {elapsed:.2f}s for {len(outputs)} outputs; "
                      f"worst match {worst * 1000:.2f} ms")


# 11 --------------------------------------------------------------------------------


def _check_results_document(text, expected_vars):
    doc = json.loads(text)
    assert set(doc) == {"head", "results"}
    assert doc["head"]["vars"] == expected_vars
    bindings = doc["results"]["bindings"]
    assert isinstance(bindings, list)
    for b in bindings:
        assert set(b) <= set(expected_vars)
        for value in b.values():
            assert value["type"] in ("uri", "literal", "bnode")
            assert isinstance(value["value"], str)
            extra = set(value) - {"type", "value"}
            assert extra <= {"xml:lang", "datatype"}
            if extra:
                assert value["type"] == "literal" and len(extra) == 1
    return len(bindings)


def test_criterion_11_sparql_json(cfg, store):
    with criterion(11, "SPARQL-JSON structure for every golden query") as detail:
        queries = {p.stem: p.read_text() for p in sorted(cfg.queries_dir.glob("*.rq"))}
        queries["typed-literals"] = ("SELECT ?v ?stage ?label WHERE { ?v :dataStage ?stage . "
                                     "?v skos:prefLabel ?label }")
        queries["empty"] = "SELECT ?x WHERE { ?x :noSuchPredicate ?y }"
        total = 0
        for name, text in queries.items():
            query = parse_query(text)
            total += _check_results_document(to_sparql_json(evaluate(query, store)), query.select_vars)
        rollup = lineage.conceptual_rollup(store, "AE.AEEN")
        assert _check_results_document(to_sparql_json(rollup), rollup.vars) == 8
        lang = GraphStore()
        lang.add(Quad(Iri("http://ex.org/a"), Iri("http://ex.org/p"), Literal("hi", language="en"), lang.default_graph))
        lang.add(Quad(Iri("http://ex.org/a"), Iri("http://ex.org/p"), Literal("1", Iri(XSD + "integer")),
                      lang.default_graph))
        _check_results_document(to_sparql_json(run_query("SELECT ?s ?o WHERE { ?s <http://ex.org/p> ?o }", lang)),
                                ["s", "o"])
        detail.append(f"{len(queries) + 2} queries, {total + 8} bindings")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

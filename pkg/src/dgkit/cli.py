"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 validation/QC findings,
3 internal error. Machine output goes to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import enricher, etl, governance, lineage, sparql, terminology
from .config import ConfigError, ToolkitConfig, load_config, load_file
from .nquads import serialize_nquads
from .terms import Iri
from .uri import GovernedUri, UriError, build_uri, parse_uri, validate_uri

log = logging.getLogger("dgkit")

EXIT_OK, EXIT_USAGE, EXIT_FINDINGS, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, path: Optional[str] = None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _table_text(table: sparql.SolutionTable) -> str:
    rows = [table.vars] + table.strings()
    widths = [max(len(r[i]) for r in rows) for i in range(len(table.vars))]
    return "".join(" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def _open_store(cfg: ToolkitConfig, args):
    return cfg.open_store(extra=tuple(args.kg or ()))


def _register_bundled_queries(store, cfg: ToolkitConfig) -> None:
    if cfg.queries_dir is None:
        return
    for path in sorted(cfg.queries_dir.glob("*.rq")):
        sparql.register_query(store, cfg.minter, path.stem, path.read_text(encoding="utf-8"),
                              annotations=("file:" + path.name,))


# -- commands -----------------------------------------------------------------------


def cmd_load(cfg, args) -> int:
    store = cfg.new_store() if args.empty else _open_store(cfg, args)
    for f in args.files:
        print(load_file(store, f, cfg.default_graph))
    return EXIT_OK


def cmd_ingest_enricher(cfg, args) -> int:
    result = enricher.ingest_enricher(args.path, cfg.registry, cfg.upper_ontology)
    if not result.report.ok:
        _write(result.report.to_csv() if args.csv else result.report.to_text())
        return EXIT_FINDINGS
    _write(result.turtle, args.output)
    log.info("QC passed: %d quads", len(result.quads))
    return EXIT_OK


def _shape_and_frame(cfg, args):
    shape = etl.TableShape.load(args.shape)
    transforms = etl.load_transforms(args.transforms) if getattr(args, "transforms", None) else []
    return shape, transforms


def cmd_etl_run(cfg, args) -> int:
    shape, transforms = _shape_and_frame(cfg, args)
    store = _open_store(cfg, args)
    result = etl.run_pipeline(args.data, transforms, shape, store, shape.minter(cfg.registry), force=args.force,
                              delimiter=cfg.multi_value_delimiter, record_level=cfg.record_level_validation)
    _write(result.report.to_csv() if args.csv else result.report.to_text())
    if result.loaded is not None:
        log.info("%s", result.loaded)
        if args.output:
            quads = list(store.match(None, None, None, result.loaded.graph)) + result.provenance
            _write(serialize_nquads(quads), args.output)
    else:
        log.warning("validation failed: nothing loaded (use --force to load conforming rows)")
    return EXIT_OK if result.report.ok else EXIT_FINDINGS


def cmd_validate(cfg, args) -> int:
    shape, transforms = _shape_and_frame(cfg, args)
    store = _open_store(cfg, args)
    errors: list = []
    frame = etl.apply_transforms(etl.extract(args.data), transforms, errors)
    report = etl.validate_data(frame, shape, store, cfg.multi_value_delimiter, cfg.record_level_validation)
    for e in errors:
        report.violations.append(etl.Violation(e.row_index, e.column, etl.ViolationKind.DATATYPE, e.message))
    for w in report.warnings:
        log.warning("%s", w)
    _write(report.to_csv() if args.csv else report.to_text())
    return EXIT_OK if report.ok else EXIT_FINDINGS


def _emit_table(table, args, headers=None) -> None:
    if args.json:
        _write(sparql.to_sparql_json(table))
    elif args.csv:
        _write(sparql.to_csv(table, headers))
    else:
        _write(_table_text(table))


def cmd_query(cfg, args) -> int:
    store = _open_store(cfg, args)
    _register_bundled_queries(store, cfg)
    if args.list:
        for entry in sparql.query_catalogue(store):
            print(entry.summary())
        return EXIT_OK
    if bool(args.file) == bool(args.name):
        raise UsageError("query: give exactly one of a query file or --name")
    text = Path(args.file).read_text(encoding="utf-8") if args.file else sparql.get_query(store, args.name).text
    _emit_table(sparql.run_query(text, store), args)
    return EXIT_OK


def cmd_lineage_rollup(cfg, args) -> int:
    store = _open_store(cfg, args)
    table = lineage.conceptual_rollup(store, args.pattern)
    _emit_table(table, args, lineage.TABLE_HEADERS)
    return EXIT_OK


def cmd_lineage_var(cfg, args) -> int:
    store = _open_store(cfg, args)
    v = lineage.variable_uri(store, args.variable)
    tl = lineage.technical_lineage(store, v)
    print(f"variable\t{v.value}")
    for role, ds in (("producing", tl.producing), ("consuming", tl.consuming)):
        for d in ds:
            outs = ",".join(o.value for o in d.outputs)
            print(f"{role}\t{d.name}\t{d.rule_kind.value}\t{d.uri.value}\t{outs}")
    return EXIT_OK


def cmd_lineage_path(cfg, args) -> int:
    store = _open_store(cfg, args)
    source, sink = lineage.variable_uri(store, args.source), lineage.variable_uri(store, args.sink)
    paths = lineage.business_lineage(store, source, sink, cfg.max_paths, cfg.max_depth)
    for p in paths:
        print(" -> ".join(lineage.path_labels(store, p)))
    if not paths:
        log.warning("no path from %s to %s", args.source, args.sink)
    return EXIT_OK


def cmd_lineage_exec(cfg, args) -> int:
    store = _open_store(cfg, args)
    target = lineage.variable_uri(store, args.target)
    records = lineage.read_records(Path(args.records).read_text(encoding="utf-8-sig"), args.subject_column)
    context = {"reference_start": args.start} if args.start else {}
    if args.start_var:
        context["study_day_ref_var"] = args.start_var
    out = lineage.execute_pipeline(store, records, target, context)
    _write(lineage.write_records(out, args.subject_column), args.output)
    return EXIT_OK


def _cascade_store(cfg, args):
    store = _open_store(cfg, args)
    if args.cascade:
        governance.import_cascade_csv(store, Path(args.cascade).read_text(encoding="utf-8"), cfg.minter)
    return store


def cmd_check_run(cfg, args) -> int:
    store = _cascade_store(cfg, args)
    frame = etl.extract(args.data)
    report = governance.run_checks(store, frame, study_id=args.study)
    _write(report.to_csv() if args.csv else report.to_text())
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_anonymise(cfg, args) -> int:
    frame = etl.extract(args.data)
    minter = cfg.minter
    rules, column_map = [], {}

    def rule(kind, column, **kw):
        uri = minter.mint("rule", f"{kind.value}-{column}")
        column_map[uri] = column
        rules.append(governance.GovernanceRule(uri, f"{kind.value} of {column}",
                                               governance.CheckSpec(kind, **kw), (uri,)))

    for col in args.suppress or ():
        rule(governance.CheckKind.SUPPRESSION, col)
    for spec in args.noise or ():
        col, _, scale = spec.partition(":")
        try:
            rule(governance.CheckKind.NOISE_ADDITION, col, scale=float(scale or "1"))
        except ValueError:
            raise UsageError(f"anonymise: bad --noise value {spec!r} (expected COLUMN:SCALE)") from None
    for col in args.offset or ():
        rule(governance.CheckKind.DATE_OFFSET, col)
    if not rules:
        raise UsageError("anonymise: give at least one of --suppress, --noise, --offset")
    result = governance.anonymise(frame, rules, args.seed, column_map, args.subject_column, cfg.redaction_token,
                                  audit_graph=Iri(cfg.graph_base + "/graphs/audit"))
    _write(result.frame.to_csv(), args.output)
    if args.audit:
        _write(serialize_nquads(result.audit), args.audit)
    return EXIT_OK


def cmd_report(cfg, args) -> int:
    if args.kind == "fair":
        store = _open_store(cfg, args)
        if not args.dataset:
            raise UsageError("report fair: give at least one --dataset IRI")
        rows = governance.fair_report(store, [Iri(d) for d in args.dataset], cfg.fair_facets, cfg.registry)
        _write(governance.fair_csv(rows) if args.csv else governance.fair_text(rows))
        return EXIT_OK
    if args.kind == "governance":
        report = governance.governance_report(_cascade_store(cfg, args))
        _write(report.to_csv() if args.csv else report.to_text())
        return EXIT_FINDINGS if report.violations else EXIT_OK
    store = _open_store(cfg, args)
    _write(terminology.glossary_turtle(store) if args.turtle else terminology.glossary_report(store))
    return EXIT_OK


def cmd_uri_build(cfg, args) -> int:
    parts = GovernedUri(
        authority=cfg.registry.authority,
        release=args.release or cfg.registry.releases[0],
        business_domain=args.domain or cfg.minting["business_domain"],
        business_subdomain=args.subdomain or cfg.minting["business_subdomain"],
        system_of_record=args.system or cfg.minting["system_of_record"],
        timestamp=args.timestamp or cfg.minting["timestamp"],
        entity_path=tuple(args.entity),
        type_segment=args.type,
        standard_segment=args.standard,
    )
    print(build_uri(parts, cfg.registry).value)
    return EXIT_OK


def cmd_uri_parse(cfg, args) -> int:
    parts = parse_uri(args.uri, cfg.registry)
    doc = {
        "authority": parts.authority,
        "release": parts.release,
        "business_domain": parts.business_domain,
        "business_subdomain": parts.business_subdomain,
        "system_of_record": parts.system_of_record,
        "timestamp": parts.timestamp,
        "type": parts.type_segment,
        "standard": parts.standard_segment,
        "entity_path": list(parts.entity_path),
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_uri_check(cfg, args) -> int:
    status = EXIT_OK
    for u in args.uris:
        outcome = validate_uri(u, cfg.registry)
        if outcome.ok:
            print(f"ok\t{u}")
        else:
            status = EXIT_FINDINGS
            print(f"invalid\t{u}\t{'; '.join(outcome.violations)}")
    return status


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dgkit", description="Metadata-governance toolkit over a governed knowledge graph.")
    p.add_argument("--config", help="configuration file (default: $DGKIT_CONFIG or the bundled config)")
    p.add_argument("--kg", action="append", metavar="FILE", help="extra knowledge-graph file to load (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("load", help="load Turtle / N-Quads files and print load reports")
    s.add_argument("files", nargs="+")
    s.add_argument("--empty", action="store_true", help="start from an empty store")
    s.set_defaults(func=cmd_load)

    s = sub.add_parser("ingest", help="ingest capture documents")
    ss = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = ss.add_parser("enricher", help="QC an enricher bundle and emit Turtle")
    e.add_argument("path")
    e.add_argument("-o", "--output")
    e.add_argument("--csv", action="store_true", help="QC findings as CSV")
    e.set_defaults(func=cmd_ingest_enricher)

    s = sub.add_parser("etl", help="semantic ETL pipeline")
    ss = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = ss.add_parser("run", help="extract, transform, validate and load a dataset")
    for a in ("--data", "--shape"):
        e.add_argument(a, required=True)
    e.add_argument("--transforms")
    e.add_argument("--force", action="store_true", help="load conforming rows despite violations")
    e.add_argument("-o", "--output", help="write loaded and provenance quads as N-Quads")
    e.add_argument("--csv", action="store_true")
    e.set_defaults(func=cmd_etl_run)

    s = sub.add_parser("validate", help="validate a dataset against a shape without loading")
    for a in ("--data", "--shape"):
        s.add_argument(a, required=True)
    s.add_argument("--transforms")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("query", help="run a query file or a catalogued query")
    s.add_argument("file", nargs="?")
    s.add_argument("--name")
    s.add_argument("--list", action="store_true", help="list the query catalogue")
    fmt = s.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("lineage", help="lineage traversal and execution")
    ss = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = ss.add_parser("rollup", help="conceptual roll-up via the lineage query")
    e.add_argument("--pattern", required=True)
    fmt = e.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    e.set_defaults(func=cmd_lineage_rollup)
    e = ss.add_parser("var", help="technical lineage of one variable")
    e.add_argument("variable", help="variable IRI or label such as DR.AE.AEENDY")
    e.set_defaults(func=cmd_lineage_var)
    e = ss.add_parser("path", help="business lineage paths between two variables")
    e.add_argument("source")
    e.add_argument("sink")
    e.set_defaults(func=cmd_lineage_path)
    e = ss.add_parser("exec", help="derive a target variable for every record")
    e.add_argument("--records", required=True)
    e.add_argument("--target", required=True)
    e.add_argument("--start", help="reference start date when records carry none")
    e.add_argument("--start-var", help="record column holding the reference start date")
    e.add_argument("--subject-column", default="USUBJID")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_lineage_exec)

    s = sub.add_parser("check", help="governance checks")
    ss = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = ss.add_parser("run", help="run detector rules against a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--cascade", help="principle,issue,rule,target CSV to import first")
    e.add_argument("--study", help="study id for study-specific rules")
    e.add_argument("--csv", action="store_true")
    e.set_defaults(func=cmd_check_run)

    s = sub.add_parser("anonymise", help="suppress, add noise or offset dates")
    s.add_argument("--data", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--suppress", action="append", metavar="COLUMN")
    s.add_argument("--noise", action="append", metavar="COLUMN:SCALE")
    s.add_argument("--offset", action="append", metavar="COLUMN")
    s.add_argument("--subject-column", default="USUBJID")
    s.add_argument("--audit", help="write audit quads as N-Quads")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_anonymise)

    s = sub.add_parser("report", help="FAIR, governance and glossary reports")
    s.add_argument("kind", choices=("fair", "governance", "glossary"))
    s.add_argument("--dataset", action="append", metavar="IRI")
    s.add_argument("--cascade")
    s.add_argument("--csv", action="store_true")
    s.add_argument("--turtle", action="store_true", help="glossary as Turtle")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("uri", help="governed URI tooling")
    ss = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = ss.add_parser("build", help="build a governed URI from its segments")
    e.add_argument("entity", nargs="+")
    e.add_argument("--type")
    e.add_argument("--standard")
    for a in ("--release", "--domain", "--subdomain", "--system", "--timestamp"):
        e.add_argument(a)
    e.set_defaults(func=cmd_uri_build)
    e = ss.add_parser("parse", help="split a governed URI into segments (JSON)")
    e.add_argument("uri")
    e.set_defaults(func=cmd_uri_parse)
    e = ss.add_parser("check", help="validate governed URIs")
    e.add_argument("uris", nargs="+")
    e.set_defaults(func=cmd_uri_check)
    return p


_INPUT_ERRORS = (ConfigError, UriError, etl.EtlError, lineage.LineageError, governance.GovernanceError,
                 enricher.EnricherError, sparql.QueryError, terminology.TerminologyError, OSError, ValueError)


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.verbose:
        log.setLevel(logging.INFO)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

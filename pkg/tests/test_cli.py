import json

import pytest

from dgkit.cli import main
from dgkit.config import DATA_DIR

from conftest import FIXTURES, GOLDEN


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_rollup_csv_matches_golden_bytes(capsys):
    code, out, _ = run(capsys, "lineage", "rollup", "--pattern", "AE.AEEN", "--csv")
    assert code == 0
    assert out.encode("utf-8") == (GOLDEN / "ae_end_lineage.csv").read_bytes()


def test_rollup_json(capsys):
    code, out, _ = run(capsys, "lineage", "rollup", "--pattern", "AE.AEEN", "--json")
    doc = json.loads(out)
    assert code == 0 and len(doc["results"]["bindings"]) == 8


def test_validate_dirty_exits_with_findings(capsys):
    code, out, _ = run(capsys, "validate", "--data", str(FIXTURES / "demographics_dirty.csv"),
                       "--shape", str(FIXTURES / "demographics_shape.yaml"), "--csv")
    assert code == 2
    assert len(out.strip().splitlines()) == 7


def test_validate_clean(capsys):
    code, _, _ = run(capsys, "validate", "--data", str(FIXTURES / "demographics_clean.csv"),
                     "--shape", str(FIXTURES / "demographics_shape.yaml"))
    assert code == 0


def test_load_twice_reports_the_same_counts(capsys):
    ttl = str(DATA_DIR / "ucm.ttl")
    code, out, _ = run(capsys, "load", "--empty", ttl, ttl)
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 2 and lines[0] == lines[1]
    assert "added=0" not in lines[0]


def test_etl_run_writes_nquads(capsys, tmp_path):
    out_file = tmp_path / "out.nq"
    code, _, _ = run(capsys, "etl", "run", "--data", str(FIXTURES / "demographics_clean.csv"),
                     "--shape", str(FIXTURES / "demographics_shape.yaml"), "-o", str(out_file))
    assert code == 0
    assert len(out_file.read_text().splitlines()) == 35


def test_query_catalogue_and_named_query(capsys):
    code, out, _ = run(capsys, "query", "--list")
    assert code == 0 and "ucm-lineage" in out
    code, out, _ = run(capsys, "query", "--name", "ucm-lineage", "--csv")
    assert code == 0 and len(out.splitlines()) == 9


def test_query_file_with_unsupported_feature(capsys, tmp_path):
    q = tmp_path / "q.rq"
    q.write_text("SELECT ?s WHERE { ?s ?p ?o OPTIONAL { ?s ?q ?r } }")
    code, _, err = run(capsys, "query", str(q))
    assert code == 1 and "OPTIONAL" in err


def test_lineage_var_and_path(capsys):
    code, out, _ = run(capsys, "lineage", "var", "DR.AE.AEENDY")
    assert code == 0 and out.count("consuming") == 2 and out.count("producing") == 1
    code, out, _ = run(capsys, "lineage", "path", "GSK.DEMO.SEX", "SD.DM.SEX")
    assert code == 0 and "GSK.DEMO.SEX [Sex]" in out


def test_lineage_exec(capsys, tmp_path):
    records = tmp_path / "ae.csv"
    records.write_text("USUBJID,AEENDAT,AEENTIM\nS1,2020-01-12,08:00\nS2,2020-01-09,\n")
    code, out, _ = run(capsys, "lineage", "exec", "--records", str(records), "--target", "DR.AE.AEENDY",
                       "--start", "2020-01-10")
    assert code == 0
    assert out.splitlines()[1].endswith(",3") and out.splitlines()[2].endswith(",-1")


def test_check_run_and_governance_report(capsys, tmp_path):
    data = tmp_path / "ae.csv"
    data.write_text("USUBJID,AEDECOD\nS1,Headache\nS2,\n")
    code, out, _ = run(capsys, "check", "run", "--data", str(data), "--cascade", str(FIXTURES / "governance.csv"),
                       "--csv")
    assert code == 2 and "MissingValue" in out
    code, out, _ = run(capsys, "report", "governance", "--cascade", str(FIXTURES / "governance.csv"), "--csv")
    assert code == 0 and "ALCOA+,Completeness,Missing value check,MissingValue,AE.AEDECOD" in out


def test_anonymise_is_deterministic(capsys, tmp_path):
    data = tmp_path / "dm.csv"
    data.write_text("USUBJID,NAME,AGE,RFSTDTC\nS1,Ann,30,2020-01-10\nS2,Bob,40,2020-02-01\n")
    args = ["anonymise", "--data", str(data), "--seed", "9", "--suppress", "NAME", "--noise", "AGE:1.5",
            "--offset", "RFSTDTC"]
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first[0] == 0 and first[1] == second[1]
    assert "Ann" not in first[1]


def test_ingest_enricher(capsys):
    code, out, _ = run(capsys, "ingest", "enricher", str(FIXTURES / "enricher_clean"))
    assert code == 0 and "skos:prefLabel" in out
    code, _, _ = run(capsys, "ingest", "enricher", str(FIXTURES / "enricher_dirty.txt"))
    assert code == 2


def test_uri_commands(capsys):
    code, out, _ = run(capsys, "uri", "build", "AE", "AEENDY", "--type", "fullyqualifiedelement",
                       "--standard", "ncds")
    assert code == 0
    uri = out.strip()
    code, out, _ = run(capsys, "uri", "parse", uri)
    assert code == 0 and json.loads(out)["entity_path"] == ["AE", "AEENDY"]
    assert run(capsys, "uri", "check", uri)[0] == 0
    assert run(capsys, "uri", "check", uri + "//x")[0] == 2


def test_report_glossary_and_fair(capsys):
    code, out, _ = run(capsys, "report", "glossary")
    assert code == 0 and out.startswith("uri,pref_label")
    code, _, err = run(capsys, "report", "fair", "--dataset", "https://kg.example.org/nothing")
    assert code == 1 and "unknown dataset" in err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["validate", "--data", "x.csv"], ["lineage", "var", "NOPE.X"]])
def test_usage_errors_exit_1(capsys, argv):
    assert run(capsys, *argv)[0] == 1

import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgkit import lineage
from dgkit.lineage import (ArityError, ClinicalRecord, Derivation, LineageCycleError, LineageError, RuleKind,
                           VariableNode)
from dgkit.store import GraphStore

from expected import INPUT_STAGES, LINEAGE_ROWS, OUTPUT_STAGES, SEX_SOURCES
from oracles import lineage_sort_key, study_day_oracle


def var(store, label):
    return lineage.variable_uri(store, label)


def new_var(store, minter, name, stage=5):
    v = VariableNode(minter.mint("fullyqualifiedelement", "T", name), "NCDS", "T", name, stage, f"T.{name}")
    return lineage.register_variable(store, v, minter.registry)


def test_rollup_reproduces_reference_rows(store):
    table = lineage.conceptual_rollup(store, "AE.AEEN")
    rows = [list(r) for r in table.strings()]
    assert sorted(rows) == sorted(LINEAGE_ROWS)
    assert [r[0] for r in rows] == INPUT_STAGES
    assert [r[5] for r in rows] == OUTPUT_STAGES
    assert rows == sorted(LINEAGE_ROWS, key=lineage_sort_key)


def test_rollup_rejects_bad_pattern(store):
    with pytest.raises(LineageError):
        lineage.conceptual_rollup(store, "(")


def test_technical_lineage_partitions_neighbours(store):
    v = var(store, "DR.AE.AEENDY")
    tl = lineage.technical_lineage(store, v)
    assert [d.rule_kind for d in tl.producing] == [RuleKind.STUDY_DAY]
    assert [d.rule_kind for d in tl.consuming] == [RuleKind.COPY_ELEMENT] * 2
    assert all(v in d.outputs for d in tl.producing)
    assert all(v in d.inputs for d in tl.consuming)
    assert not {d.uri for d in tl.producing} & {d.uri for d in tl.consuming}


def test_business_lineage_for_sex(store):
    sink = var(store, "SD.DM.SEX")
    for source in SEX_SOURCES:
        paths = lineage.business_lineage(store, var(store, source), sink)
        assert paths, source
        assert all(p[0] == var(store, source) and p[-1] == sink for p in paths)


def test_business_lineage_end_date(store):
    paths = lineage.business_lineage(store, var(store, "RP.AE.AEENDAT"), var(store, "DR.AE.AEENDY"))
    assert len(paths) == 1 and len(paths[0]) == 9
    assert lineage.business_lineage(store, var(store, "DM.SEX"), var(store, "DM.SEX")) == [(var(store, "DM.SEX"),)]


def test_bundled_lineage_is_acyclic(store):
    lineage.check_acyclic(store)


def test_cycle_is_detected(empty_store, minter):
    a, b = new_var(empty_store, minter, "A"), new_var(empty_store, minter, "B")
    for i, (x, y) in enumerate([(a, b), (b, a)]):
        lineage.register_derivation(empty_store, Derivation(minter.mint("derivation", f"D{i}"), f"D{i}", "copy",
                                                            RuleKind.COPY_ELEMENT, (x,), (y,)))
    with pytest.raises(LineageCycleError) as info:
        lineage.check_acyclic(empty_store)
    assert info.value.cycle[0] == info.value.cycle[-1]


@pytest.mark.parametrize("kind, n_in, n_out", [
    (RuleKind.COPY_ELEMENT, 2, 1), (RuleKind.DTC, 1, 1), (RuleKind.DTN, 1, 2), (RuleKind.STUDY_DAY, 0, 1),
    (RuleKind.OPAQUE, 1, 0),
])
def test_arity_errors(minter, kind, n_in, n_out):
    vs = [minter.mint("fullyqualifiedelement", f"V{i}") for i in range(4)]
    with pytest.raises(ArityError):
        Derivation(minter.mint("derivation", "x"), "x", "rule", kind, tuple(vs[:n_in]), tuple(vs[2:2 + n_out]))


def test_variable_validation(minter):
    with pytest.raises(LineageError):
        VariableNode(minter.mint("fullyqualifiedelement", "X"), "NCDS", "AE", "X", 0, "AE.X")
    with pytest.raises(LineageError):
        VariableNode(minter.mint("fullyqualifiedelement", "X"), "NCDS", "AE", "X", 1, "DM.Y")


def test_dangling_derivation_is_rejected(empty_store, minter):
    a = new_var(empty_store, minter, "A")
    with pytest.raises(LineageError):
        lineage.register_derivation(empty_store, Derivation(minter.mint("derivation", "D"), "D", "copy",
                                                            RuleKind.COPY_ELEMENT, (a,),
                                                            (minter.mint("fullyqualifiedelement", "ghost"),)))


def test_study_day_has_no_day_zero():
    start = dt.date(2020, 1, 10)
    assert lineage.study_day(start, start) == 1
    assert lineage.study_day(dt.date(2020, 1, 9), start) == -1
    assert lineage.study_day("2020-01-12T10:30", "2020-01-10") == 3
    assert lineage.study_day(None, start) is None


dates = st.dates(dt.date(1990, 1, 1), dt.date(2040, 12, 31))


@settings(max_examples=300, deadline=None)
@given(dates, dates)
def test_study_day_matches_oracle_and_is_never_zero(event, start):
    value = lineage.study_day(event, start)
    assert value == study_day_oracle(event, start)
    assert value != 0
    assert (value > 0) == (event >= start)


@settings(max_examples=300, deadline=None)
@given(dates, dates, st.integers(-3650, 3650))
def test_study_day_commutes_with_a_common_offset(event, start, k):
    shift = dt.timedelta(days=k)
    try:
        shifted = lineage.study_day(event + shift, start + shift)
    except OverflowError:
        return
    assert shifted == lineage.study_day(event, start)


def test_datetime_number_and_dtc():
    assert lineage.combine_date_time("2020-01-02", "10:30") == "2020-01-02T10:30"
    assert lineage.combine_date_time("2020-01-02", None) == "2020-01-02"
    assert lineage.datetime_number("1970-01-02T12:00") == 1.5
    assert lineage.to_date(1.5) == dt.date(1970, 1, 2)


def test_execute_pipeline_end_to_end(store):
    target = var(store, "DR.AE.AEENDY")
    records = [
        ClinicalRecord("S1", {"AEENDAT": "2020-01-12", "AEENTIM": "08:00", "RFSTDTC": "2020-01-10"}),
        ClinicalRecord("S2", {"AEENDAT": "2020-01-09", "AEENTIM": None, "RFSTDTC": "2020-01-10"}),
    ]
    out = lineage.execute_pipeline(store, records, target, {"study_day_ref_var": "RFSTDTC"})
    assert [r.cells["AEENDY"] for r in out] == [3, -1]
    assert out[1].cells["AEENDTC"] == "2020-01-09"


def test_opaque_derivations_cannot_run(minter):
    d = Derivation(minter.mint("derivation", "O"), "O", "magic", RuleKind.OPAQUE,
                   (minter.mint("fullyqualifiedelement", "A"),), (minter.mint("fullyqualifiedelement", "B"),))
    with pytest.raises(LineageError):
        lineage.execute_derivation(d, ClinicalRecord("S", {"A": "1"}))


def test_records_round_trip():
    text = "USUBJID,A,B\nS1,1,\nS2,,x\n"
    assert lineage.write_records(lineage.read_records(text)) == text
    with pytest.raises(LineageError):
        lineage.read_records("ID,A\n1,2\n")


def test_unknown_variable_is_an_error():
    with pytest.raises(LineageError):
        lineage.technical_lineage(GraphStore(), lineage.VARIABLE)

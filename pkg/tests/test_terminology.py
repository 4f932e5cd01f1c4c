import pytest

from dgkit.terminology import (Concept, Definition, MappingLink, ReferenceList, SourceKind, Strength,
                               TerminologyError, add_mapping, get_concept, get_reference_list, glossary_report,
                               import_mappings_csv, list_coverage, mapping_links, similarity, suggest_matches,
                               upsert_concept, upsert_reference_list)
from dgkit.terms import Iri
from dgkit.uri import validate_uri


def concept(minter, name, label=None, **kw):
    return Concept(minter.mint("concept", name), label or name, **kw)


def test_upsert_replaces_labels_and_dedupes_definitions(empty_store, minter):
    d = Definition("Biological sex.", SourceKind.HUMAN, "glossary")
    c = concept(minter, "Sex", alt_labels={"Gender"}, definitions=[d])
    upsert_concept(empty_store, c, minter.registry)
    upsert_concept(empty_store, concept(minter, "Sex", alt_labels={"SEX"}, definitions=[d]), minter.registry)
    back = get_concept(empty_store, c.uri)
    assert back.alt_labels == {"SEX"}
    assert back.definitions == [d]
    assert validate_uri(c.uri, minter.registry).ok


def test_definition_requires_text_and_kind():
    with pytest.raises(TerminologyError):
        Definition("  ", SourceKind.HUMAN)
    with pytest.raises(TerminologyError):
        Definition("x", "Human")


def test_broader_must_exist(empty_store, minter):
    with pytest.raises(TerminologyError):
        upsert_concept(empty_store, concept(minter, "A", broader=minter.mint("concept", "Nope")))


def test_suggest_matches_uses_all_labels(empty_store, minter):
    upsert_concept(empty_store, concept(minter, "Country", hidden_labels={"Nation of residence"}))
    upsert_concept(empty_store, concept(minter, "Sex"))
    hits = suggest_matches(empty_store, "nation of  residense", 0.8)
    assert [c.pref_label for c, _ in hits] == ["Country"]
    assert similarity("Sex", "sex") == 1.0
    with pytest.raises(TerminologyError):
        suggest_matches(empty_store, "x", 1.5)


def test_mappings_and_coverage(empty_store, minter):
    a = [concept(minter, f"A{i}") for i in range(3)]
    b = [concept(minter, f"B{i}") for i in range(2)]
    for c in a + b:
        upsert_concept(empty_store, c)
    la = upsert_reference_list(empty_store, ReferenceList(minter.mint("referencelist", "LA"), "LA", [c.uri for c in a]))
    lb = upsert_reference_list(empty_store, ReferenceList(minter.mint("referencelist", "LB"), "LB", [c.uri for c in b]))
    add_mapping(empty_store, MappingLink(a[0].uri, b[0].uri, Strength.EXACT))
    add_mapping(empty_store, MappingLink(b[1].uri, a[1].uri, Strength.NARROW))
    cov = list_coverage(empty_store, la, lb)
    assert cov.mapped == 2 and cov.unmapped_a == [a[2].uri] and cov.unmapped_b == []
    rev = list_coverage(empty_store, lb, la)
    assert rev.mapped == cov.mapped
    assert (b[0].uri, Strength.EXACT, a[0].uri) in mapping_links(empty_store)
    assert get_reference_list(empty_store, la).members == [c.uri for c in a]


def test_reference_list_members_must_be_concepts(empty_store, minter):
    with pytest.raises(TerminologyError):
        upsert_reference_list(empty_store, ReferenceList(minter.mint("referencelist", "X"), "X",
                                                         [minter.mint("concept", "ghost")]))


def test_import_mappings_csv(empty_store, minter):
    a, b = concept(minter, "A"), concept(minter, "B")
    upsert_concept(empty_store, a)
    upsert_concept(empty_store, b)
    n = import_mappings_csv(empty_store, f"from,to,strength\n{a.uri.value},{b.uri.value},close\n")
    assert n == 1
    with pytest.raises(TerminologyError):
        import_mappings_csv(empty_store, f"{a.uri.value},{b.uri.value},sideways\n")


def test_sex_reference_list(store):
    rl = get_reference_list(store, Iri("https://kg.example.org/r1/development/clinical/globalmetadata/v1/"
                                       "referencelist/SEX"))
    labels = {get_concept(store, m).pref_label for m in rl.members}
    assert labels == {"Male", "Female", "Undifferentiated", "Unknown"}


def test_glossary_report_is_sorted(store):
    lines = glossary_report(store).splitlines()
    assert lines[0] == "uri,pref_label,alt_labels,definitions"
    uris = [line.split(",", 1)[0] for line in lines[1:]]
    assert uris == sorted(uris)

import pytest
from hypothesis import given, settings

from dgkit.config import load_config
from dgkit.uri import (AmbiguousSegment, GovernedUri, InvalidTimestamp, InvalidToken, MissingMandatorySegment,
                       NotGoverned, UnregisteredSegment, build_uri, parse_uri, safe_token, validate_uri)

from strategies import governed_parts

REGISTRY = load_config().registry


def parts(**kw):
    base = dict(authority=REGISTRY.authority, release="r1", business_domain="development",
                business_subdomain="clinical", system_of_record="ucm", timestamp="v1",
                entity_path=("AE", "AEENDY"))
    base.update(kw)
    return GovernedUri(**base)


def test_build_and_parse_with_optional_segments():
    uri = build_uri(parts(type_segment="fullyqualifiedelement", standard_segment="ncds"), REGISTRY)
    assert uri.value == ("https://kg.example.org/r1/development/clinical/ucm/v1/"
                         "fullyqualifiedelement/ncds/AE/AEENDY")
    back = parse_uri(uri, REGISTRY)
    assert back.type_segment == "fullyqualifiedelement"
    assert back.standard_segment == "ncds"
    assert back.entity_path == ("AE", "AEENDY")


@pytest.mark.parametrize("kw, error", [
    (dict(release="r9"), UnregisteredSegment),
    (dict(business_subdomain="governance"), UnregisteredSegment),
    (dict(system_of_record="nowhere"), UnregisteredSegment),
    (dict(timestamp="2023-02-30"), InvalidTimestamp),
    (dict(timestamp="latest"), InvalidTimestamp),
    (dict(entity_path=()), MissingMandatorySegment),
    (dict(entity_path=("a b",)), InvalidToken),
    (dict(business_domain=""), MissingMandatorySegment),
    (dict(entity_path=("concept", "x")), AmbiguousSegment),
])
def test_build_rejects(kw, error):
    with pytest.raises(error):
        build_uri(parts(**kw), REGISTRY)


def test_parse_rejects_foreign_and_short_uris():
    with pytest.raises(NotGoverned):
        parse_uri("http://elsewhere.org/r1/x", REGISTRY)
    with pytest.raises(MissingMandatorySegment):
        parse_uri("https://kg.example.org/r1/development/clinical", REGISTRY)


def test_validate_collects_without_raising():
    assert validate_uri(build_uri(parts(), REGISTRY), REGISTRY).ok
    bad = validate_uri("https://kg.example.org/r1/development//ucm/v1/x", REGISTRY)
    assert not bad.ok and any("empty segment" in v for v in bad.violations)
    assert not validate_uri("not an iri", REGISTRY).ok


def test_safe_token():
    assert safe_token("Missing value check") == "Missing_value_check"
    assert safe_token("ALCOA+") == "ALCOA_"


def test_minter_output_is_governed(minter):
    for args in [("concept", "Sex"), ("rule", "Missing value check"), (None, "thing")]:
        uri = minter.mint(*args)
        assert validate_uri(uri, minter.registry).ok, uri


@settings(max_examples=300, deadline=None)
@given(governed_parts(REGISTRY))
def test_uri_round_trip(p):
    uri = build_uri(p, REGISTRY)
    assert parse_uri(uri, REGISTRY) == p
    assert validate_uri(uri, REGISTRY).ok

"""Governed enterprise URIs: build, parse and validate against a segment registry.

Layout::

    <authority>/<release>/<domain>/<subdomain>/<system>/<timestamp>[/<type>][/<standard>]/<entity>[/<child>...]
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import yaml

from .terms import Iri, is_valid_iri

TOKEN = re.compile(r"[A-Za-z0-9_.\-]+")
VERSION = re.compile(r"v\d+")
ISO_DATE = re.compile(r"\d{4}-\d{2}-\d{2}")

MANDATORY = ("release", "business_domain", "business_subdomain", "system_of_record", "timestamp")


class UriError(ValueError):
    pass


class MissingMandatorySegment(UriError):
    def __init__(self, name: str):
        super().__init__(f"missing mandatory segment {name!r}")
        self.name = name


class UnregisteredSegment(UriError):
    def __init__(self, name: str, value: str):
        super().__init__(f"segment {name!r} value {value!r} is not in the registry")
        self.name = name
        self.value = value


class InvalidTimestamp(UriError):
    def __init__(self, value: str):
        super().__init__(f"timestamp {value!r} is neither v<digits> nor a valid ISO-8601 date")
        self.value = value


class InvalidToken(UriError):
    def __init__(self, name: str, value: str):
        super().__init__(f"segment {name!r} value {value!r} is not a URL-safe token")
        self.name = name
        self.value = value


class NotGoverned(UriError):
    pass


class AmbiguousSegment(UriError):
    pass


def is_timestamp(value: str) -> bool:
    if VERSION.fullmatch(value):
        return True
    if not ISO_DATE.fullmatch(value):
        return False
    try:
        dt.date.fromisoformat(value)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class SegmentRegistry:
    """Controlled lists for the governed segments.

    ``domains`` maps each business domain to its allowed subdomains.
    """

    authority: str
    releases: tuple[str, ...]
    domains: dict
    systems: tuple[str, ...]
    types: tuple[str, ...] = ()
    standards: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.authority or not is_valid_iri(self.authority):
            raise ValueError(f"registry authority must be an absolute IRI, got {self.authority!r}")
        for name in ("releases", "systems"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"registry list {name!r} must be nonempty")
        if not self.domains or any(not subs for subs in self.domains.values()):
            raise ValueError("registry domains and their subdomain lists must be nonempty")
        lists = [("releases", self.releases), ("systems", self.systems), ("types", self.types),
                 ("standards", self.standards)]
        lists += [(f"domains.{d}", subs) for d, subs in self.domains.items()]
        for name, values in lists:
            if len(set(values)) != len(values):
                raise ValueError(f"registry list {name!r} has duplicate values")

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentRegistry":
        return cls(
            authority=str(data["authority"]).rstrip("/"),
            releases=tuple(data["releases"]),
            domains={k: tuple(v) for k, v in data["domains"].items()},
            systems=tuple(data["systems"]),
            types=tuple(data.get("types") or ()),
            standards=tuple(data.get("standards") or ()),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SegmentRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class GovernedUri:
    authority: str
    release: str
    business_domain: str
    business_subdomain: str
    system_of_record: str
    timestamp: str
    entity_path: tuple[str, ...]
    type_segment: Optional[str] = None
    standard_segment: Optional[str] = None

    def segments(self) -> list[str]:
        segs = [self.release, self.business_domain, self.business_subdomain,
                self.system_of_record, self.timestamp]
        if self.type_segment is not None:
            segs.append(self.type_segment)
        if self.standard_segment is not None:
            segs.append(self.standard_segment)
        return segs + list(self.entity_path)


def _check_parts(parts: GovernedUri, registry: SegmentRegistry) -> None:
    if not parts.authority:
        raise MissingMandatorySegment("authority")
    for name in MANDATORY:
        if not getattr(parts, name):
            raise MissingMandatorySegment(name)
    if not parts.entity_path:
        raise MissingMandatorySegment("entity_path")
    for f in fields(parts):
        value = getattr(parts, f.name)
        if f.name in ("authority", "timestamp") or value is None:
            continue
        for v in value if f.name == "entity_path" else (value,):
            if not v:
                raise MissingMandatorySegment(f.name)
            if not TOKEN.fullmatch(v):
                raise InvalidToken(f.name, v)
    if not is_timestamp(parts.timestamp):
        raise InvalidTimestamp(parts.timestamp)
    if parts.authority.rstrip("/") != registry.authority:
        raise UnregisteredSegment("authority", parts.authority)
    if parts.release not in registry.releases:
        raise UnregisteredSegment("release", parts.release)
    if parts.business_domain not in registry.domains:
        raise UnregisteredSegment("business_domain", parts.business_domain)
    if parts.business_subdomain not in registry.domains[parts.business_domain]:
        raise UnregisteredSegment("business_subdomain", parts.business_subdomain)
    if parts.system_of_record not in registry.systems:
        raise UnregisteredSegment("system_of_record", parts.system_of_record)
    if parts.type_segment is not None and parts.type_segment not in registry.types:
        raise UnregisteredSegment("type_segment", parts.type_segment)
    if parts.standard_segment is not None and parts.standard_segment not in registry.standards:
        raise UnregisteredSegment("standard_segment", parts.standard_segment)
    # Optional segments are positional: an entity token that collides with an
    # omitted optional segment's vocabulary would be misread on parse.
    head = parts.entity_path[0]
    if parts.type_segment is None and parts.standard_segment is None and head in registry.types:
        raise AmbiguousSegment(f"entity {head!r} would parse as a type segment")
    if parts.standard_segment is None and head in registry.standards:
        raise AmbiguousSegment(f"entity {head!r} would parse as a standard segment")
    if parts.type_segment is None and parts.standard_segment in registry.types:
        raise AmbiguousSegment(f"standard {parts.standard_segment!r} would parse as a type segment")


def build_uri(parts: GovernedUri, registry: SegmentRegistry) -> Iri:
    """Render ``parts`` as a governed IRI after checking every registry constraint."""
    _check_parts(parts, registry)
    return Iri(registry.authority + "/" + "/".join(parts.segments()))


def parse_uri(value: Union[Iri, str], registry: SegmentRegistry) -> GovernedUri:
    """Split a governed IRI back into its segments.

    Type and standard segments are recognized only when the token is in the
    corresponding registry list; everything after them is the entity path.
    """
    text = value.value if isinstance(value, Iri) else value
    prefix = registry.authority + "/"
    if not text.startswith(prefix):
        raise NotGoverned(f"{text!r} is not under authority {registry.authority!r}")
    segs = text[len(prefix):].split("/")
    if not segs or segs[0] not in registry.releases:
        raise NotGoverned(f"{text!r} does not start with a known release token")
    if "" in segs:
        raise UriError("empty segment")
    if len(segs) < 6:
        names = ["release", "business_domain", "business_subdomain", "system_of_record", "timestamp", "entity_path"]
        raise MissingMandatorySegment(names[len(segs)])
    release, domain, subdomain, system, timestamp, *rest = segs
    type_segment = standard_segment = None
    for token in rest[:2]:
        if token in registry.types and token in registry.standards:
            raise AmbiguousSegment(f"segment {token!r} is registered as both type and standard")
    if rest and rest[0] in registry.types:
        type_segment = rest.pop(0)
    if rest and rest[0] in registry.standards:
        standard_segment = rest.pop(0)
    if not rest:
        raise MissingMandatorySegment("entity_path")
    return GovernedUri(
        authority=registry.authority,
        release=release,
        business_domain=domain,
        business_subdomain=subdomain,
        system_of_record=system,
        timestamp=timestamp,
        entity_path=tuple(rest),
        type_segment=type_segment,
        standard_segment=standard_segment,
    )


@dataclass(frozen=True)
class ValidationOutcome:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_uri(value: Union[Iri, str], registry: SegmentRegistry) -> ValidationOutcome:
    """Collect every grammar and registry violation; never raises."""
    text = value.value if isinstance(value, Iri) else str(value)
    problems: list[str] = []
    if not is_valid_iri(text):
        problems.append("malformed IRI")
    if "//" in text.split("://", 1)[-1]:
        problems.append("empty segment")
    try:
        parts = parse_uri(text, registry)
    except UriError as exc:
        if str(exc) != "empty segment" or "empty segment" not in problems:
            problems.append(f"{type(exc).__name__}: {exc}")
        return ValidationOutcome(tuple(problems))
    try:
        _check_parts(parts, registry)
    except UriError as exc:
        problems.append(f"{type(exc).__name__}: {exc}")
    return ValidationOutcome(tuple(problems))


@dataclass(frozen=True)
class Minter:
    """Mints governed IRIs that share one domain/subdomain/system/timestamp context."""

    registry: SegmentRegistry
    business_domain: str
    business_subdomain: str
    system_of_record: str
    timestamp: str
    release: str = ""
    extra: dict = field(default_factory=dict)

    def parts(self, entity_path, type_segment=None, standard_segment=None) -> GovernedUri:
        return GovernedUri(
            authority=self.registry.authority,
            release=self.release or self.registry.releases[0],
            business_domain=self.business_domain,
            business_subdomain=self.business_subdomain,
            system_of_record=self.system_of_record,
            timestamp=self.timestamp,
            entity_path=tuple(entity_path),
            type_segment=type_segment,
            standard_segment=standard_segment,
        )

    def mint(self, type_segment: Optional[str], *entity_path: str, standard: Optional[str] = None) -> Iri:
        return build_uri(self.parts([safe_token(e) for e in entity_path], type_segment, standard), self.registry)

    def is_governed(self, value: Union[Iri, str]) -> bool:
        text = value.value if isinstance(value, Iri) else value
        return text.startswith(self.registry.authority + "/")


def safe_token(value: str) -> str:
    """Map free text onto the token alphabet (runs of other characters become ``_``)."""
    token = re.sub(r"[^A-Za-z0-9_.\-]+", "_", value.strip())
    if not token:
        raise UriError(f"cannot derive a URI token from {value!r}")
    return token

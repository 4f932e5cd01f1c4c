"""Toolkit configuration: registry, minting context, default knowledge-graph files."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .nquads import parse_nquads
from .store import GraphStore, LoadReport, load
from .terms import STANDARD_PREFIXES, Iri, expand_curie
from .turtle import parse_turtle
from .uri import Minter, SegmentRegistry

DATA_DIR = Path(__file__).parent / "data"
ENV_VAR = "DGKIT_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class ToolkitConfig:
    authority: str
    graph_base: str
    default_graph: Iri
    registry: SegmentRegistry
    upper_ontology: tuple[str, ...]
    minting: dict
    kg_files: list[Path] = field(default_factory=list)
    queries_dir: Optional[Path] = None
    fair_facets: dict = field(default_factory=dict)
    multi_value_delimiter: str = "|"
    redaction_token: str = "[REDACTED]"
    max_paths: int = 1000
    max_depth: int = 32
    record_level_validation: bool = True

    @property
    def minter(self) -> Minter:
        return Minter(self.registry, **self.minting)

    def new_store(self) -> GraphStore:
        return GraphStore(self.graph_base, self.default_graph)

    def open_store(self, extra: tuple = (), include_defaults: bool = True) -> GraphStore:
        store = self.new_store()
        files = (list(self.kg_files) if include_defaults else []) + [Path(p) for p in extra]
        for path in files:
            load_file(store, path, self.default_graph)
        return store


def load_file(store: GraphStore, path: Union[str, Path], default_graph: Optional[Iri] = None) -> LoadReport:
    """Parse a ``.ttl`` or ``.nq``/``.nt`` file and load it into its file-named graph."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    placeholder = default_graph or store.default_graph
    if path.suffix in (".nq", ".nt"):
        quads = parse_nquads(text, placeholder)
    else:
        quads = parse_turtle(text, placeholder, base=path.resolve().as_uri())
    return load(store, quads, path.name)


def load_config(path: Union[str, Path, None] = None) -> ToolkitConfig:
    """Read the configuration from ``path``, ``$DGKIT_CONFIG``, or the bundled default."""
    path = Path(path or os.environ.get(ENV_VAR) or DATA_DIR / "config.yaml")
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    root = path.parent

    def resolve(p) -> Path:
        full = (root / p) if not Path(p).is_absolute() else Path(p)
        if not full.exists():
            raise ConfigError(f"configured path does not exist: {full}")
        return full

    try:
        registry = SegmentRegistry.load(resolve(raw["registry"]))
        with open(resolve(raw["upper_ontology"]), encoding="utf-8") as fh:
            classes = tuple(yaml.safe_load(fh)["classes"])
        facets = {
            facet: {name: Iri(expand_curie(pred, STANDARD_PREFIXES)) for name, pred in (preds or {}).items()}
            for facet, preds in (raw.get("fair_facets") or {}).items()
        }
        authority = str(raw.get("authority", registry.authority)).rstrip("/")
        if authority != registry.authority:
            raise ConfigError(f"config authority {authority!r} differs from registry authority {registry.authority!r}")
        return ToolkitConfig(
            authority=authority,
            graph_base=str(raw.get("graph_base", authority)).rstrip("/"),
            default_graph=Iri(raw.get("default_graph", authority + "/graphs/default")),
            registry=registry,
            upper_ontology=classes,
            minting=dict(raw["minting"]),
            kg_files=[resolve(p) for p in raw.get("kg_files") or []],
            queries_dir=resolve(raw["queries_dir"]) if raw.get("queries_dir") else None,
            fair_facets=facets,
            multi_value_delimiter=raw.get("multi_value_delimiter", "|"),
            redaction_token=raw.get("redaction_token", "[REDACTED]"),
            max_paths=int(raw.get("max_paths", 1000)),
            max_depth=int(raw.get("max_depth", 32)),
            record_level_validation=bool(raw.get("record_level_validation", True)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing configuration key {exc}") from None

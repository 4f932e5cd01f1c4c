"""dgkit: a metadata-governance toolkit over a governed RDF knowledge graph.

Modules: ``store``/``turtle``/``nquads`` (quad store and loaders), ``uri``
(governed URI grammar), ``terminology`` (SKOS concepts and mappings), ``etl``
(shape validation pipeline), ``lineage`` (clinical variable lineage),
``governance`` (cascade, checks, anonymisation, reports), ``sparql`` (query
subset) and ``cli``.
"""

from .config import ToolkitConfig, load_config
from .store import GraphStore, LoadReport, load
from .terms import BlankNode, Iri, Literal, Quad

__version__ = "0.1.0"

__all__ = ["BlankNode", "GraphStore", "Iri", "Literal", "LoadReport", "Quad", "ToolkitConfig", "load",
           "load_config"]

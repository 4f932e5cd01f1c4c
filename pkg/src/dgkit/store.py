"""In-memory indexed quad store with file-based graph naming and loader semantics."""

from __future__ import annotations

import re
import threading
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import PurePath
from typing import Iterable, Iterator, Optional

from .terms import OWL, BlankNode, Iri, Literal, Quad, Term, term_key

OWL_INVERSE_OF = Iri(OWL + "inverseOf")

DEFAULT_BASE = "https://kg.example.org"


@dataclass(frozen=True)
class LoadReport:
    graph: Iri
    added: int
    deduped: int
    inversed: int

    def __str__(self):
        return f"{self.graph.value}\tadded={self.added}\tdeduped={self.deduped}\tinversed={self.inversed}"


def graph_name(source_name: str, base: str = DEFAULT_BASE) -> Iri:
    """Graph IRI for a source file: ``<base>/graphs/<basename without extension>``.

    Non-alphanumeric characters of the stem are replaced by ``-``.
    """
    if not source_name:
        raise ValueError("source_name must be nonempty")
    stem = PurePath(source_name).name
    if "." in stem.lstrip("."):
        stem = stem[: stem.rindex(".")]
    stem = re.sub(r"[^A-Za-z0-9]", "-", stem) or "-"
    return Iri(f"{base.rstrip('/')}/graphs/{stem}")


class GraphStore:
    """Set of quads indexed by subject, predicate, object and graph.

    Readers may run concurrently; writers take ``store.write_lock``.
    ``match`` iterates over a snapshot, so writes during iteration are safe
    but not observed.
    """

    def __init__(self, base: str = DEFAULT_BASE, default_graph: Optional[Iri] = None):
        self.base = base.rstrip("/")
        self.default_graph = default_graph or Iri(self.base + "/graphs/default")
        self._quads: set[Quad] = set()
        self._by_s: dict = defaultdict(set)
        self._by_p: dict = defaultdict(set)
        self._by_o: dict = defaultdict(set)
        self._by_g: dict = defaultdict(set)
        self.write_lock = threading.RLock()

    # -- basic set operations -------------------------------------------

    def __len__(self):
        return len(self._quads)

    def __contains__(self, quad):
        return quad in self._quads

    def __iter__(self) -> Iterator[Quad]:
        return iter(tuple(self._quads))

    def add(self, quad: Quad) -> bool:
        """Insert one quad; returns False if it was already present."""
        if quad in self._quads:
            return False
        with self.write_lock:
            self._quads.add(quad)
            self._by_s[quad.subject].add(quad)
            self._by_p[quad.predicate].add(quad)
            self._by_o[quad.object].add(quad)
            self._by_g[quad.graph].add(quad)
        return True

    def add_all(self, quads: Iterable[Quad]) -> int:
        return sum(1 for q in quads if self.add(q))

    def remove(self, quad: Quad) -> bool:
        if quad not in self._quads:
            return False
        with self.write_lock:
            self._quads.discard(quad)
            for index, key in (
                (self._by_s, quad.subject),
                (self._by_p, quad.predicate),
                (self._by_o, quad.object),
                (self._by_g, quad.graph),
            ):
                bucket = index[key]
                bucket.discard(quad)
                if not bucket:
                    del index[key]
        return True

    def clear_graph(self, graph: Iri) -> int:
        quads = tuple(self._by_g.get(graph, ()))
        for q in quads:
            self.remove(q)
        return len(quads)

    def graphs(self) -> list[Iri]:
        return sorted(self._by_g, key=lambda g: g.value)

    def count(self, s=None, p=None, o=None, g=None) -> int:
        """Upper bound on ``match`` size from the smallest bound index (exact when one position is bound)."""
        sizes = [len(idx.get(k, ())) for idx, k in self._bound(s, p, o, g)]
        return min(sizes) if sizes else len(self._quads)

    def _bound(self, s, p, o, g):
        out = []
        if s is not None:
            out.append((self._by_s, s))
        if p is not None:
            out.append((self._by_p, p))
        if o is not None:
            out.append((self._by_o, o))
        if g is not None:
            out.append((self._by_g, g))
        return out

    # -- lookup ------------------------------------------------------------

    def match(self, s: Optional[Term] = None, p: Optional[Iri] = None,
              o: Optional[Term] = None, g: Optional[Iri] = None) -> Iterator[Quad]:
        """Quads matching every bound position; ``None`` is a wildcard."""
        bound = self._bound(s, p, o, g)
        if not bound:
            return iter(tuple(self._quads))
        buckets = [idx.get(k) for idx, k in bound]
        if any(b is None for b in buckets):
            return iter(())
        buckets.sort(key=len)
        smallest = buckets[0]
        if len(buckets) == 1:
            return iter(tuple(smallest))
        rest = buckets[1:]
        return iter(tuple(q for q in smallest if all(q in b for b in rest)))

    def objects(self, s: Term, p: Iri) -> list[Term]:
        return sorted({q.object for q in self.match(s, p)}, key=term_key)

    def subjects(self, p: Iri, o: Term) -> list[Term]:
        return sorted({q.subject for q in self.match(None, p, o)}, key=term_key)

    def value(self, s: Term, p: Iri) -> Optional[Term]:
        objs = self.objects(s, p)
        return objs[0] if objs else None

    def has_subject(self, s: Term) -> bool:
        return s in self._by_s

    # -- inverse materialization ---------------------------------------

    def inverse_map(self) -> dict[Iri, Iri]:
        """Predicate -> inverse predicate, from every ``owl:inverseOf`` quad in the store (both directions)."""
        inv: dict[Iri, Iri] = {}
        for q in self.match(None, OWL_INVERSE_OF):
            if type(q.subject) is Iri and type(q.object) is Iri:
                inv[q.subject] = q.object
                inv[q.object] = q.subject
        return inv

    def materialize_inverses(self, graph: Optional[Iri] = None) -> int:
        """Add ``(o, q, s, g)`` for every ``(s, p, o, g)`` with ``p owl:inverseOf q``.

        Restricted to ``graph`` when given. Returns the number of quads added.
        """
        inv = self.inverse_map()
        added = 0
        for p, q in inv.items():
            for quad in self.match(None, p, None, graph):
                if type(quad.object) is Literal:
                    continue
                if self.add(Quad(quad.object, q, quad.subject, quad.graph)):
                    added += 1
        return added

    @contextmanager
    def writing(self):
        with self.write_lock:
            yield self


def skolemize(term: Term, graph: Iri, base: str) -> Term:
    if type(term) is BlankNode:
        stem = graph.value.rsplit("/", 1)[-1]
        return Iri(f"{base}/.well-known/genid/{stem}/{term.label}")
    return term


def load(store: GraphStore, quads: Iterable[Quad], source_name: str) -> LoadReport:
    """Replace the graph named after ``source_name`` with ``quads``.

    The target graph is cleared first, blank nodes are skolemized, spog
    duplicates collapse, and inverse predicates are materialized in a
    post-load pass over the loaded graph.
    """
    graph = graph_name(source_name, store.base)
    with store.write_lock:
        store.clear_graph(graph)
        added = deduped = 0
        for q in quads:
            s = skolemize(q.subject, graph, store.base)
            o = skolemize(q.object, graph, store.base)
            if store.add(Quad(s, q.predicate, o, graph)):
                added += 1
            else:
                deduped += 1
        inversed = store.materialize_inverses(graph)
    return LoadReport(graph, added, deduped, inversed)

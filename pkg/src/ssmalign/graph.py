"""In-memory RDF triple store with subject/predicate/object indexes.

Graphs are built once, sealed, and then only read.  All query results are
deterministically ordered so that downstream serializations are reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDF_PROPERTY = "http://www.w3.org/1999/02/22-rdf-syntax-ns#Property"
RDFS_CLASS = "http://www.w3.org/2000/01/rdf-schema#Class"
RDFS_SUBCLASSOF = "http://www.w3.org/2000/01/rdf-schema#subClassOf"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"
RDFS_COMMENT = "http://www.w3.org/2000/01/rdf-schema#comment"
RDFS_DOMAIN = "http://www.w3.org/2000/01/rdf-schema#domain"
RDFS_RANGE = "http://www.w3.org/2000/01/rdf-schema#range"
OWL_CLASS = "http://www.w3.org/2002/07/owl#Class"
XSD_NS = "http://www.w3.org/2001/XMLSchema#"
SKOS_NS = "http://www.w3.org/2004/02/skos/core#"


class GraphStateError(RuntimeError):
    """Mutation of a sealed graph, or querying an unsealed one."""


@dataclass(frozen=True, slots=True)
class Iri:
    """An absolute IRI (http(s)://... or urn:...)."""

    value: str

    def __post_init__(self) -> None:
        if not self.value:
            raise ValueError("IRI must be non-empty")
        if "://" not in self.value and not (
            self.value.startswith("urn:") and len(self.value) > 4
        ):
            raise ValueError(f"not an absolute IRI or URN: {self.value!r}")

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class Literal:
    """An RDF literal; datatype and language tag are mutually exclusive."""

    lexical: str
    datatype: Iri | None = None
    language: str | None = None

    def __post_init__(self) -> None:
        if self.datatype is not None and self.language is not None:
            raise ValueError("literal cannot carry both datatype and language tag")


@dataclass(frozen=True, slots=True)
class BlankNode:
    local_id: str

    def __post_init__(self) -> None:
        if not self.local_id:
            raise ValueError("blank node id must be non-empty")


Term = Iri | Literal | BlankNode
Subject = Iri | BlankNode


def _escape_literal(text: str) -> str:
    out = []
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def term_to_ntriples(term: Term) -> str:
    """Canonical N-Triples form of a term; doubles as the global sort key."""
    if isinstance(term, Iri):
        return f"<{term.value}>"
    if isinstance(term, BlankNode):
        return f"_:{term.local_id}"
    body = f'"{_escape_literal(term.lexical)}"'
    if term.language is not None:
        return f"{body}@{term.language}"
    if term.datatype is not None:
        return f"{body}^^<{term.datatype.value}>"
    return body


@dataclass(frozen=True, slots=True)
class Triple:
    subject: Subject
    predicate: Iri
    object: Term

    def to_ntriples(self) -> str:
        return (
            f"{term_to_ntriples(self.subject)} "
            f"{term_to_ntriples(self.predicate)} "
            f"{term_to_ntriples(self.object)} ."
        )


def _triple_key(t: Triple) -> tuple[str, str, str]:
    return (
        term_to_ntriples(t.subject),
        term_to_ntriples(t.predicate),
        term_to_ntriples(t.object),
    )


class Graph:
    """Triple set with by-subject/by-predicate/by-object indexes.

    Single-writer while under construction; :meth:`seal` freezes it, after
    which it is safe for unlimited concurrent readers.
    """

    def __init__(self) -> None:
        self._triples: set[Triple] = set()
        self._by_subject: dict[Subject, set[Triple]] = {}
        self._by_predicate: dict[Iri, set[Triple]] = {}
        self._by_object: dict[Term, set[Triple]] = {}
        self._sealed = False

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self):
        return iter(sorted(self._triples, key=_triple_key))

    def __contains__(self, t: Triple) -> bool:
        return t in self._triples

    @property
    def sealed(self) -> bool:
        return self._sealed

    def add_triple(self, t: Triple) -> "Graph":
        if self._sealed:
            raise GraphStateError("cannot add triples to a sealed graph")
        if t not in self._triples:
            self._triples.add(t)
            self._by_subject.setdefault(t.subject, set()).add(t)
            self._by_predicate.setdefault(t.predicate, set()).add(t)
            self._by_object.setdefault(t.object, set()).add(t)
        return self

    def add(self, subject: Subject, predicate: Iri, obj: Term) -> "Graph":
        return self.add_triple(Triple(subject, predicate, obj))

    def seal(self) -> "Graph":
        self._sealed = True
        return self

    def _require_sealed(self) -> None:
        if not self._sealed:
            raise GraphStateError("graph must be sealed before it is queried")

    def triples_matching(
        self,
        subject: Subject | None = None,
        predicate: Iri | None = None,
        obj: Term | None = None,
    ) -> list[Triple]:
        """All triples matching the bound positions, deterministically sorted."""
        self._require_sealed()
        candidates: set[Triple] | None = None
        if subject is not None:
            candidates = self._by_subject.get(subject, set())
        if predicate is not None:
            found = self._by_predicate.get(predicate, set())
            candidates = found if candidates is None else candidates & found
        if obj is not None:
            found = self._by_object.get(obj, set())
            candidates = found if candidates is None else candidates & found
        if candidates is None:
            candidates = self._triples
        return sorted(candidates, key=_triple_key)

    def objects(self, subject: Subject, predicate: Iri) -> list[Term]:
        return [t.object for t in self.triples_matching(subject, predicate, None)]

    def has_subject(self, subject: Subject) -> bool:
        self._require_sealed()
        return subject in self._by_subject

    def mentions(self, term: Term) -> bool:
        """True if the term occurs anywhere in the graph."""
        self._require_sealed()
        return (
            term in self._by_subject
            or (isinstance(term, Iri) and term in self._by_predicate)
            or term in self._by_object
        )


def local_name(iri: Iri | str) -> str:
    """Fragment after the last '#', else last path segment, else the full IRI."""
    value = iri.value if isinstance(iri, Iri) else iri
    if "#" in value:
        frag = value.rsplit("#", 1)[1]
        if frag:
            return frag
    elif "/" in value:
        seg = value.rsplit("/", 1)[1]
        if seg:
            return seg
    else:
        return value
    return value


@dataclass(frozen=True, slots=True)
class PropertySlot:
    """One property attached to a class, with its simplified name and range."""

    iri: Iri
    name: str
    range_kind: str  # "literal" | "object" | "unknown"
    range_name: str


@dataclass(frozen=True, slots=True)
class ClassDescriptor:
    """One matchable class: the unit handed to the scoring pipeline."""

    iri: Iri
    label: str
    comment: str = ""
    superclasses: tuple[Iri, ...] = ()
    properties: tuple[PropertySlot, ...] = ()

    def property_names(self) -> frozenset[str]:
        return frozenset(slot.name for slot in self.properties)


def _strip_class_qualifier(prop_local: str, class_local: str) -> str:
    # Metamodel lifting mints property IRIs as ns#<Class>_<prop>; the
    # structural signature compares bare property names.
    prefix = class_local + "_"
    if prop_local.startswith(prefix) and len(prop_local) > len(prefix):
        return prop_local[len(prefix):]
    return prop_local


def _pick_literal(values: list[Term]) -> str:
    """Deterministic choice among literal values: untagged, then "en", then
    the lexicographically smallest."""
    best: tuple[int, str] | None = None
    for v in values:
        if not isinstance(v, Literal):
            continue
        if v.language is None:
            tier = 0
        elif v.language.lower() == "en":
            tier = 1
        else:
            tier = 2
        key = (tier, v.lexical)
        if best is None or key < best:
            best = key
    return best[1] if best else ""


def class_iris(graph: Graph) -> list[Iri]:
    """Every IRI treated as a class: typed rdfs:Class/owl:Class, or either
    side of rdfs:subClassOf.  Blank-node classes are skipped (no stable IRI
    to align) and counted for diagnostics."""
    rdf_type = Iri(RDF_TYPE)
    found: set[Iri] = set()
    skipped_blank = 0
    for marker in (Iri(RDFS_CLASS), Iri(OWL_CLASS)):
        for t in graph.triples_matching(None, rdf_type, marker):
            if isinstance(t.subject, Iri):
                found.add(t.subject)
            else:
                skipped_blank += 1
    for t in graph.triples_matching(None, Iri(RDFS_SUBCLASSOF), None):
        for term in (t.subject, t.object):
            if isinstance(term, Iri):
                found.add(term)
            else:
                skipped_blank += 1
    if skipped_blank:
        logger.info("skipped %d blank-node class(es) during extraction", skipped_blank)
    return sorted(found, key=lambda i: i.value)


def count_blank_classes(graph: Graph) -> int:
    """Blank nodes in class positions; reported in run diagnostics."""
    rdf_type = Iri(RDF_TYPE)
    blanks: set[BlankNode] = set()
    for marker in (Iri(RDFS_CLASS), Iri(OWL_CLASS)):
        for t in graph.triples_matching(None, rdf_type, marker):
            if isinstance(t.subject, BlankNode):
                blanks.add(t.subject)
    for t in graph.triples_matching(None, Iri(RDFS_SUBCLASSOF), None):
        for term in (t.subject, t.object):
            if isinstance(term, BlankNode):
                blanks.add(term)
    return len(blanks)


def describe_class(graph: Graph, c: Iri) -> ClassDescriptor:
    label = _pick_literal(graph.objects(c, Iri(RDFS_LABEL))) or local_name(c)
    comment = _pick_literal(graph.objects(c, Iri(RDFS_COMMENT)))
    supers = tuple(
        sorted(
            {o for o in graph.objects(c, Iri(RDFS_SUBCLASSOF)) if isinstance(o, Iri)},
            key=lambda i: i.value,
        )
    )
    class_local = local_name(c)
    slots: list[PropertySlot] = []
    seen: set[Iri] = set()
    for t in graph.triples_matching(None, Iri(RDFS_DOMAIN), c):
        if not isinstance(t.subject, Iri) or t.subject in seen:
            continue
        seen.add(t.subject)
        prop = t.subject
        ranges = [r for r in graph.objects(prop, Iri(RDFS_RANGE)) if isinstance(r, Iri)]
        if ranges:
            rng = sorted(ranges, key=lambda i: i.value)[0]
            kind = "literal" if rng.value.startswith(XSD_NS) else "object"
            range_name = local_name(rng)
        else:
            kind, range_name = "unknown", ""
        slots.append(
            PropertySlot(
                iri=prop,
                name=_strip_class_qualifier(local_name(prop), class_local),
                range_kind=kind,
                range_name=range_name,
            )
        )
    slots.sort(key=lambda s: s.iri.value)
    return ClassDescriptor(
        iri=c,
        label=label,
        comment=comment,
        superclasses=supers,
        properties=tuple(slots),
    )


def extract_classes(graph: Graph) -> list[ClassDescriptor]:
    """A descriptor for every matchable class, sorted by IRI."""
    return [describe_class(graph, c) for c in class_iris(graph)]


def properties_of(graph: Graph, c: Iri) -> set[str]:
    """The structural signature of a class: simplified local names of the
    properties declared with rdfs:domain = c."""
    class_local = local_name(c)
    names: set[str] = set()
    for t in graph.triples_matching(None, Iri(RDFS_DOMAIN), c):
        if isinstance(t.subject, Iri):
            names.add(_strip_class_qualifier(local_name(t.subject), class_local))
    return names


def serialize_ntriples(graph: Graph) -> str:
    """Canonical, sorted N-Triples serialization (empty graph -> empty text)."""
    lines = [t.to_ntriples() for t in graph]
    return "\n".join(lines) + "\n" if lines else ""

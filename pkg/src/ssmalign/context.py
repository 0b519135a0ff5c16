"""N-hop class context and its natural-language rendering.

The context of a class is the union, over hops 1..h, of (predicate, object)
pairs reachable by breadth-first traversal of subject-outgoing edges.  Class
structure that hangs off properties via rdfs:domain is folded in as virtual
outgoing edges (property -> its range), so attribute/reference structure is
part of the neighborhood even though RDF points those arcs at the class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .graph import (
    RDFS_DOMAIN,
    RDFS_RANGE,
    BlankNode,
    ClassDescriptor,
    Graph,
    Iri,
    Literal,
    Term,
    local_name,
    term_to_ntriples,
)

logger = logging.getLogger(__name__)

DEFAULT_HOPS = 5
DEFAULT_VERBALIZATION_BUDGET = 1200

TRUNCATION_MARK = "…"


@dataclass(frozen=True)
class ContextPair:
    predicate: Iri
    obj: Term
    hop: int


@dataclass(frozen=True)
class ContextSet:
    class_iri: Iri
    pairs: tuple[ContextPair, ...] = ()

    def __len__(self) -> int:
        return len(self.pairs)


def _pair_sort_key(pair: ContextPair) -> tuple[int, str, str]:
    return (pair.hop, pair.predicate.value, term_to_ntriples(pair.obj))


def expand_context(g: Graph, c: Iri, h: int) -> ContextSet:
    """Collect the h-hop neighborhood of class ``c``.

    Literals are leaves; IRI objects join the next frontier.  A visited set
    guarantees termination on cyclic graphs, and each (predicate, object)
    pair is kept once at its shallowest hop.
    """
    if h < 0:
        raise ValueError("hop count must be >= 0")
    if h == 0:
        return ContextSet(class_iri=c)
    if not g.mentions(c):
        logger.warning("context requested for unknown class %s", c.value)
        return ContextSet(class_iri=c)

    rdfs_domain = Iri(RDFS_DOMAIN)
    rdfs_range = Iri(RDFS_RANGE)
    visited: set[Iri] = {c}
    frontier: list[Iri] = [c]
    seen_pairs: set[tuple[Iri, Term]] = set()
    pairs: list[ContextPair] = []

    for hop in range(1, h + 1):
        next_frontier: set[Iri] = set()

        def emit(predicate: Iri, obj: Term) -> None:
            if (predicate, obj) in seen_pairs:
                return
            seen_pairs.add((predicate, obj))
            pairs.append(ContextPair(predicate, obj, hop))
            if isinstance(obj, Iri) and obj not in visited:
                visited.add(obj)
                next_frontier.add(obj)

        for node in sorted(frontier, key=lambda i: i.value):
            for t in g.triples_matching(node, None, None):
                emit(t.predicate, t.object)
            # virtual property edges: p with rdfs:domain = node contributes
            # (p, range-of-p) pairs; only ranged properties are expanded
            for t in g.triples_matching(None, rdfs_domain, node):
                if not isinstance(t.subject, Iri):
                    continue
                for rng in g.objects(t.subject, rdfs_range):
                    if not isinstance(rng, BlankNode):
                        emit(t.subject, rng)
        if not next_frontier:
            break
        frontier = sorted(next_frontier, key=lambda i: i.value)

    return ContextSet(class_iri=c, pairs=tuple(sorted(pairs, key=_pair_sort_key)))


def _term_display(term: Term) -> str:
    if isinstance(term, Iri):
        return local_name(term)
    if isinstance(term, Literal):
        return term.lexical
    return f"_:{term.local_id}"


def verbalize(
    d: ClassDescriptor,
    ctx: ContextSet | None = None,
    budget: int = DEFAULT_VERBALIZATION_BUDGET,
) -> str:
    """Render a class and its context as one deterministic text block.

    Output: ``Class <label>. <comment> Subclass of: ... Properties: ...
    Related: ...`` with the related pairs truncated at a pair boundary once
    the character budget is reached.
    """
    head_parts = [f"Class {d.label}."]
    if d.comment:
        head_parts.append(d.comment if d.comment.endswith(".") else d.comment + ".")
    if d.superclasses:
        names = ", ".join(local_name(s) for s in d.superclasses)
        head_parts.append(f"Subclass of: {names}.")
    if d.properties:
        rendered = ", ".join(
            f"{slot.name} ({slot.range_name})" if slot.range_name else slot.name
            for slot in d.properties
        )
        head_parts.append(f"Properties: {rendered}.")
    head = " ".join(head_parts)

    related = [
        f"{local_name(p.predicate)} → {_term_display(p.obj)}"
        for p in (ctx.pairs if ctx is not None else ())
    ]
    if not related:
        return head if len(head) <= budget else head[: budget - 1] + TRUNCATION_MARK

    prefix = head + " Related: "
    full = prefix + ", ".join(related) + "."
    if len(full) <= budget:
        return full
    kept: list[str] = []
    for item in related:
        tentative = prefix + ", ".join(kept + [item]) + ", " + TRUNCATION_MARK
        if len(tentative) > budget:
            break
        kept.append(item)
    if kept:
        return prefix + ", ".join(kept) + ", " + TRUNCATION_MARK
    return (prefix + TRUNCATION_MARK)[:budget]

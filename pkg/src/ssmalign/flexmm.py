"""Flexible modeling layer: metaclasses, instances, conformance, discovery.

Models can conform to their metaclasses rigidly (exact structure) or in a
relaxed mode where extra attributes are tolerated.  When new attributes show
up in the data, archetypal discovery infers their primitive kinds and the
metaclass is evolved explicitly with :func:`update_class`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime

logger = logging.getLogger(__name__)

KIND_ORDER = ("boolean", "number", "date", "string")  # most to least specific


class FlexModelError(ValueError):
    """Usage error in the flexible-modeling layer."""


@dataclass(frozen=True)
class MetaClass:
    name: str
    description: str = ""
    attributes: dict[str, str] = field(default_factory=dict)  # name -> kind
    references: dict[str, tuple[str, str]] = field(default_factory=dict)  # name -> (target, card.)
    flexible: bool = False
    semantic_reference: str | None = None

    def __post_init__(self) -> None:
        overlap = set(self.attributes) & set(self.references)
        if overlap:
            raise FlexModelError(
                f"class {self.name!r}: names used as both attribute and reference: "
                f"{sorted(overlap)}"
            )


@dataclass
class Instance:
    class_name: str
    values: dict[str, object] = field(default_factory=dict)
    links: dict[str, list[str]] = field(default_factory=dict)
    id: str = ""


@dataclass(frozen=True)
class Violation:
    kind: str  # missing-attribute | extra-attribute | type-mismatch | bad-cardinality | dangling-link
    detail: str


@dataclass(frozen=True)
class ConformanceReport:
    conforms: bool
    violations: tuple[Violation, ...] = ()

    @property
    def warnings(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.kind == "extra-attribute")


@dataclass(frozen=True)
class ClassDelta:
    added_attributes: dict[str, str] = field(default_factory=dict)
    notes: tuple[str, ...] = ()


_DATE_ONLY = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def _parse_iso_datetime(text: str) -> datetime | None:
    if _DATE_ONLY.match(text):
        try:
            return datetime.fromisoformat(text)
        except ValueError:
            return None
    try:
        return datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        return None


def infer_kind(value: object) -> str:
    """Infer the primitive kind of an observed value.

    Tried most-specific first: boolean, integer-as-number, number, date,
    string.
    """
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, datetime):
        return "date"
    text = str(value)
    if text.strip().lower() in ("true", "false"):
        return "boolean"
    stripped = text.strip()
    try:
        int(stripped)
        return "number"
    except ValueError:
        pass
    try:
        float(stripped)
        return "number"
    except ValueError:
        pass
    if _parse_iso_datetime(stripped) is not None:
        return "date"
    return "string"


def _value_matches_kind(value: object, kind: str) -> bool:
    if kind == "boolean":
        return isinstance(value, bool) or str(value).strip().lower() in ("true", "false")
    if kind == "number":
        if isinstance(value, bool):
            return False
        if isinstance(value, (int, float)):
            return True
        try:
            float(str(value).strip())
            return True
        except ValueError:
            return False
    if kind == "date":
        return isinstance(value, datetime) or _parse_iso_datetime(str(value).strip()) is not None
    return isinstance(value, str)


def conforms(
    inst: Instance,
    mc: MetaClass,
    mode: str = "rigid",
    known_ids: set[str] | None = None,
) -> ConformanceReport:
    """Check an instance against its metaclass.

    Rigid mode flags missing attributes, extra attributes, and type
    mismatches.  Relaxed mode (or a flexible metaclass) downgrades extra
    attributes to warnings; the report still conforms.  Cardinality and
    dangling-link violations apply in both modes.
    """
    if mode not in ("rigid", "relaxed"):
        raise FlexModelError(f"unknown conformance mode {mode!r}")
    if inst.class_name != mc.name:
        raise FlexModelError(
            f"instance of {inst.class_name!r} checked against class {mc.name!r}"
        )
    relaxed = mode == "relaxed" or mc.flexible
    violations: list[Violation] = []
    for name, kind in sorted(mc.attributes.items()):
        if name not in inst.values:
            violations.append(Violation("missing-attribute", f"{mc.name}.{name} is absent"))
        elif not _value_matches_kind(inst.values[name], kind):
            violations.append(
                Violation(
                    "type-mismatch",
                    f"{mc.name}.{name} expected {kind}, got {inst.values[name]!r}",
                )
            )
    for name in sorted(inst.values):
        if name not in mc.attributes:
            violations.append(Violation("extra-attribute", f"{mc.name}.{name} is not declared"))
    for name, ids in sorted(inst.links.items()):
        if name not in mc.references:
            violations.append(Violation("extra-attribute", f"reference {mc.name}.{name} is not declared"))
            continue
        _, cardinality = mc.references[name]
        if cardinality == "one" and len(ids) > 1:
            violations.append(
                Violation("bad-cardinality", f"{mc.name}.{name} holds {len(ids)} targets, expects one")
            )
        if known_ids is not None:
            for target in ids:
                if target not in known_ids:
                    violations.append(
                        Violation("dangling-link", f"{mc.name}.{name} -> unknown instance {target!r}")
                    )
    if relaxed:
        ok = all(v.kind == "extra-attribute" for v in violations)
    else:
        ok = not violations
    return ConformanceReport(conforms=ok, violations=tuple(violations))


def archetypal_discovery(name: str, inst: Instance, mc: MetaClass) -> ClassDelta:
    """Infer attributes present on the instance but absent from the class."""
    if inst.class_name != mc.name:
        raise FlexModelError(
            f"instance of {inst.class_name!r} discovered against class {mc.name!r}"
        )
    added = {
        attr: infer_kind(value)
        for attr, value in sorted(inst.values.items())
        if attr not in mc.attributes and attr not in mc.references
    }
    notes = ()
    if added:
        notes = (f"{name}: discovered {len(added)} new attribute(s): {', '.join(sorted(added))}",)
    return ClassDelta(added_attributes=added, notes=notes)


def merge_deltas(deltas: list[ClassDelta]) -> ClassDelta:
    """Union of deltas over many instances; kind conflicts widen to the least
    specific observed kind."""
    merged: dict[str, str] = {}
    notes: list[str] = []
    for delta in deltas:
        for attr, kind in delta.added_attributes.items():
            if attr in merged and merged[attr] != kind:
                widened = max((merged[attr], kind), key=KIND_ORDER.index)
                notes.append(
                    f"attribute {attr!r} observed as both {merged[attr]} and {kind}; "
                    f"widened to {widened}"
                )
                merged[attr] = widened
            else:
                merged.setdefault(attr, kind)
    return ClassDelta(added_attributes=merged, notes=tuple(notes))


def update_class(mc: MetaClass, delta: ClassDelta) -> MetaClass:
    """Evolve a metaclass with discovered attributes; returns a new class."""
    collisions = (set(delta.added_attributes) & set(mc.attributes)) | (
        set(delta.added_attributes) & set(mc.references)
    )
    if collisions:
        raise FlexModelError(
            f"class {mc.name!r}: delta collides with existing names {sorted(collisions)}"
        )
    return replace(mc, attributes={**mc.attributes, **delta.added_attributes})


def set_semantic_reference(mc: MetaClass, iri: str) -> MetaClass:
    """Attach (or replace) the ontology concept this class is grounded in."""
    if mc.semantic_reference is not None and mc.semantic_reference != iri:
        logger.warning(
            "class %s: semantic reference %s overwritten with %s",
            mc.name,
            mc.semantic_reference,
            iri,
        )
    return replace(mc, semantic_reference=iri)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EntityMapping:
    class_name: str
    columns: dict[str, str]  # csv column -> attribute name
    key: str | None = None  # csv column identifying the entity across rows


@dataclass(frozen=True)
class LinkMapping:
    from_class: str
    reference: str
    to_class: str


@dataclass(frozen=True)
class IngestMapping:
    entities: tuple[EntityMapping, ...]
    links: tuple[LinkMapping, ...] = ()


def load_mapping(text: str) -> IngestMapping:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FlexModelError(f"invalid mapping JSON: {exc}") from None
    entities = tuple(
        EntityMapping(e["class"], dict(e.get("columns", {})), e.get("key"))
        for e in raw.get("entities", [])
    )
    links = tuple(
        LinkMapping(l["from"], l["reference"], l["to"]) for l in raw.get("links", [])
    )
    if not entities:
        raise FlexModelError("mapping declares no entities")
    return IngestMapping(entities=entities, links=links)


@dataclass
class ModelLayer:
    instances: list[Instance] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def by_id(self, instance_id: str) -> Instance | None:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        return None

    def of_class(self, class_name: str) -> list[Instance]:
        return [i for i in self.instances if i.class_name == class_name]


def _parse_cell(raw: str, kind: str) -> object:
    if kind == "number":
        return float(raw)
    if kind == "boolean":
        lowered = raw.strip().lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "date":
        if _parse_iso_datetime(raw.strip()) is None:
            raise ValueError(f"not an ISO date: {raw!r}")
        return raw.strip()
    return raw


def ingest_csv(
    rows: list[dict[str, str]],
    mapping: IngestMapping,
    metamodel: dict[str, MetaClass],
    mode: str = "rigid",
) -> ModelLayer:
    """Build a model layer from tabular records.

    One instance per mapped entity per row; entities with a key column are
    deduplicated across rows by key value.  Cells are parsed according to the
    metaclass attribute kind; unparseable cells raise a row diagnostic in
    rigid mode and fall back to the raw string (with a warning) in relaxed
    mode.
    """
    if mode not in ("rigid", "relaxed"):
        raise FlexModelError(f"unknown ingestion mode {mode!r}")
    for entity in mapping.entities:
        mc = metamodel.get(entity.class_name)
        if mc is None:
            raise FlexModelError(f"mapping references unknown class {entity.class_name!r}")
        for column, attr in entity.columns.items():
            if attr not in mc.attributes:
                raise FlexModelError(
                    f"mapping column {column!r} targets unknown attribute "
                    f"{entity.class_name}.{attr}"
                )
    for link in mapping.links:
        mc = metamodel.get(link.from_class)
        if mc is None or link.reference not in mc.references:
            raise FlexModelError(
                f"mapping link {link.from_class}.{link.reference} is not declared"
            )

    layer = ModelLayer()
    counters: dict[str, int] = {}
    keyed: dict[tuple[str, str], Instance] = {}

    def new_instance(class_name: str) -> Instance:
        counters[class_name] = counters.get(class_name, 0) + 1
        inst = Instance(class_name=class_name, id=f"{class_name.lower()}-{counters[class_name]}")
        layer.instances.append(inst)
        return inst

    for row_no, row in enumerate(rows, start=1):
        per_row: dict[str, Instance] = {}
        for entity in mapping.entities:
            mc = metamodel[entity.class_name]
            key_value = row.get(entity.key, "").strip() if entity.key else None
            if entity.key and key_value:
                inst = keyed.get((entity.class_name, key_value))
                if inst is None:
                    inst = new_instance(entity.class_name)
                    keyed[(entity.class_name, key_value)] = inst
            else:
                inst = new_instance(entity.class_name)
            per_row[entity.class_name] = inst
            for column, attr in entity.columns.items():
                if column not in row:
                    continue
                raw = row[column]
                try:
                    inst.values[attr] = _parse_cell(raw, mc.attributes[attr])
                except ValueError as exc:
                    if mode == "rigid":
                        layer.diagnostics.append(f"row {row_no}: {exc}")
                    else:
                        inst.values[attr] = raw
                        layer.diagnostics.append(f"row {row_no}: {exc}; stored as string")
        for link in mapping.links:
            source = per_row.get(link.from_class)
            target = per_row.get(link.to_class)
            if source is None or target is None:
                continue
            targets = source.links.setdefault(link.reference, [])
            if target.id not in targets:
                targets.append(target.id)
    return layer


def read_csv(text: str) -> list[dict[str, str]]:
    """RFC-4180 CSV with a required header row."""
    return list(csv.DictReader(io.StringIO(text)))


def metaclasses_from_document(doc) -> dict[str, MetaClass]:
    """Bridge a parsed metamodel document into the modeling layer registry."""
    registry: dict[str, MetaClass] = {}
    for cls in doc.classes:
        registry[cls.name] = MetaClass(
            name=cls.name,
            description=cls.description,
            attributes={a.name: a.kind for a in cls.attributes},
            references={r.name: (r.target, r.cardinality) for r in cls.references},
            semantic_reference=cls.semantic_reference,
        )
    return registry

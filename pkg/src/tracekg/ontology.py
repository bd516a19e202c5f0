"""Extensible schema registry for the threat graph.

Entity types are grouped under three dimensions (vulnerability, attack,
defense). Relation types constrain which entity types may appear at each
end of an edge. The registry is append-only: every successful
registration bumps the version, and no registered type is ever
redefined. Validation helpers are pure functions over a registry
snapshot, so readers never need a lock; registrations are serialized
through a single internal writer lock.

``Registry.seed()`` builds the minimal registry: the entity types used
by unstructured extraction plus the fixed semantic relations and the
hierarchy relation. ``load_default_catalog`` layers the structured-feed
types (cwe, cpe, score, ...) and their relations on top.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateTypeError,
    InvalidTypeNameError,
    OntologyError,
    UnknownTypeError,
)

_TYPE_NAME = re.compile(r"^[a-z][a-z0-9_]*$")


class Dimension(str, Enum):
    VULNERABILITY = "vulnerability"
    ATTACK = "attack"
    DEFENSE = "defense"


class Origin(str, Enum):
    STRUCTURED = "structured"
    UNSTRUCTURED = "unstructured"
    HIERARCHY = "hierarchy"


class ValueKind(str, Enum):
    TEXT = "text"
    NUMBER = "number"
    LIST_OF_TEXT = "list-of-text"
    MAP = "map"


class HierarchyAction(Enum):
    FLATTEN_WITH_SUBLABELS = "flatten_with_sublabels"
    NEW_CHILD_TYPE = "new_child_type"


@dataclass(frozen=True)
class EntityType:
    """A node type: its dimension, origin, and property layout."""

    name: str
    dimension: Dimension
    origin: Origin
    property_schema: tuple = ()  # ((property-name, ValueKind), ...)
    required_properties: frozenset = frozenset()

    def __post_init__(self):
        if not _TYPE_NAME.match(self.name):
            raise InvalidTypeNameError(
                f"type names are lower_snake_case identifiers, got {self.name!r}"
            )
        schema_names = {p for p, _ in self.property_schema}
        extra = set(self.required_properties) - schema_names
        if extra:
            raise OntologyError(
                f"required properties not in schema for {self.name!r}: {sorted(extra)}"
            )

    def kind_of(self, prop: str) -> ValueKind | None:
        for name, kind in self.property_schema:
            if name == prop:
                return kind
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension.value,
            "origin": self.origin.value,
            "property_schema": [[p, k.value] for p, k in self.property_schema],
            "required_properties": sorted(self.required_properties),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityType":
        return cls(
            name=d["name"],
            dimension=Dimension(d["dimension"]),
            origin=Origin(d["origin"]),
            property_schema=tuple((p, ValueKind(k)) for p, k in d.get("property_schema", [])),
            required_properties=frozenset(d.get("required_properties", [])),
        )


@dataclass(frozen=True)
class RelationType:
    """An edge type; empty endpoint sets mean "any registered type"."""

    name: str
    allowed_src: frozenset = frozenset()
    allowed_dst: frozenset = frozenset()
    origin: Origin = Origin.STRUCTURED

    def __post_init__(self):
        if not _TYPE_NAME.match(self.name):
            raise InvalidTypeNameError(
                f"relation names are lower_snake_case identifiers, got {self.name!r}"
            )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "allowed_src": sorted(self.allowed_src),
            "allowed_dst": sorted(self.allowed_dst),
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationType":
        return cls(
            name=d["name"],
            allowed_src=frozenset(d.get("allowed_src", [])),
            allowed_dst=frozenset(d.get("allowed_dst", [])),
            origin=Origin(d["origin"]),
        )


@dataclass(frozen=True)
class HierarchyPolicy:
    """Flatten sublists up to this size; beyond it, child nodes are created."""

    flatten_threshold: int = 8

    def __post_init__(self):
        if self.flatten_threshold < 1:
            raise OntologyError("flatten_threshold must be >= 1")


def decide_hierarchy(parent_type: EntityType, subcategory_count: int,
                     policy: HierarchyPolicy) -> HierarchyAction:
    """Flatten small sub-structures into labelled properties; large ones
    become a child node type named after the parent structure.

    Pure function: the boundary (count == threshold) flattens.
    """
    if subcategory_count < 0:
        raise OntologyError("subcategory_count must be >= 0")
    if subcategory_count <= policy.flatten_threshold:
        return HierarchyAction.FLATTEN_WITH_SUBLABELS
    return HierarchyAction.NEW_CHILD_TYPE


# Entity types extracted from unstructured text. The first five are the
# fixed report-extraction set; method/mitigation/product serve the paper
# and repair-notice genres.
_DESC = (("description", ValueKind.TEXT),)

SEED_ENTITY_TYPES = (
    EntityType("vulnerability", Dimension.VULNERABILITY, Origin.UNSTRUCTURED,
               _DESC + (("aliases", ValueKind.LIST_OF_TEXT),)),
    EntityType("tool", Dimension.ATTACK, Origin.UNSTRUCTURED, _DESC),
    EntityType("technique", Dimension.ATTACK, Origin.UNSTRUCTURED, _DESC),
    EntityType("group", Dimension.ATTACK, Origin.UNSTRUCTURED,
               _DESC + (("aliases", ValueKind.LIST_OF_TEXT),)),
    EntityType("asset", Dimension.ATTACK, Origin.UNSTRUCTURED, _DESC),
    EntityType("method", Dimension.ATTACK, Origin.UNSTRUCTURED, _DESC),
    EntityType("mitigation", Dimension.DEFENSE, Origin.UNSTRUCTURED, _DESC),
    EntityType("product", Dimension.VULNERABILITY, Origin.UNSTRUCTURED,
               _DESC + (("vendor", ValueKind.TEXT),)),
)

SEED_RELATION_TYPES = (
    RelationType("discovers", frozenset({"technique", "method", "tool"}),
                 frozenset({"vulnerability"}), Origin.UNSTRUCTURED),
    RelationType("uses", frozenset({"group", "method", "technique", "tool"}),
                 frozenset({"technique", "tool", "method", "vulnerability"}),
                 Origin.UNSTRUCTURED),
    RelationType("causes", frozenset({"technique", "tool", "method"}),
                 frozenset({"vulnerability"}), Origin.UNSTRUCTURED),
    RelationType("reflects", frozenset({"vulnerability"}), frozenset({"asset"}),
                 Origin.UNSTRUCTURED),
    RelationType("mitigates", frozenset({"mitigation"}), frozenset({"technique"}),
                 Origin.UNSTRUCTURED),
    RelationType("solves", frozenset({"mitigation"}), frozenset({"vulnerability"}),
                 Origin.UNSTRUCTURED),
    # Hierarchy links may join any registered pair of types.
    RelationType("belong_to", frozenset(), frozenset(), Origin.HIERARCHY),
)


class Registry:
    """Append-only registry of entity and relation types.

    Versions increase strictly: the seed batch is version 1 and each
    later registration bumps the version by one.
    """

    def __init__(self):
        self.entity_types: dict[str, EntityType] = {}
        self.relation_types: dict[str, RelationType] = {}
        self.hierarchy_policy = HierarchyPolicy()
        self.version = 0
        self._lock = threading.Lock()

    @classmethod
    def seed(cls) -> "Registry":
        reg = cls()
        for t in SEED_ENTITY_TYPES:
            reg.entity_types[t.name] = t
        for r in SEED_RELATION_TYPES:
            reg.relation_types[r.name] = r
        reg.version = 1
        return reg

    # -- registration ---------------------------------------------------

    def register_entity_type(self, t: EntityType) -> int:
        with self._lock:
            existing = self.entity_types.get(t.name.lower())
            if existing is not None:
                raise DuplicateTypeError(t.name, existing)
            self.entity_types[t.name] = t
            self.version += 1
            return self.version

    def register_relation_type(self, r: RelationType) -> int:
        with self._lock:
            existing = self.relation_types.get(r.name.lower())
            if existing is not None:
                raise DuplicateTypeError(r.name, existing)
            for endpoint in sorted(r.allowed_src | r.allowed_dst):
                if endpoint not in self.entity_types:
                    raise UnknownTypeError(
                        f"relation {r.name!r} references unregistered type {endpoint!r}"
                    )
            self.relation_types[r.name] = r
            self.version += 1
            return self.version

    # -- validation -----------------------------------------------------

    def validate_node(self, node) -> list[str]:
        """Report violations; an empty list means the node is acceptable.

        ``node`` needs attributes id, type, name, source, timestamp,
        description, properties.
        """
        violations = []
        etype = self.entity_types.get(getattr(node, "type", None))
        if etype is None:
            violations.append(f"unknown type: {getattr(node, 'type', None)!r}")
        for required in ("id", "name", "source", "timestamp"):
            value = getattr(node, required, None)
            if value is None or value == "":
                violations.append(f"missing required property: {required}")
        props = getattr(node, "properties", None) or {}
        if etype is not None:
            for required in sorted(etype.required_properties):
                if required not in props or props[required] in (None, ""):
                    violations.append(f"missing required property: {required}")
            for prop, value in props.items():
                kind = etype.kind_of(prop)
                if kind is not None and not _kind_matches(kind, value):
                    violations.append(
                        f"property {prop!r} expects {kind.value}, got {type(value).__name__}"
                    )
        return violations

    def validate_triple(self, triple, get_node_type=None) -> list[str]:
        """Report violations for a triple; endpoint existence is checked
        when a ``get_node_type(id) -> type-name | None`` resolver is given.
        """
        violations = []
        rel = self.relation_types.get(getattr(triple, "relation", None))
        if rel is None:
            violations.append(f"unknown relation: {getattr(triple, 'relation', None)!r}")
        src, dst = getattr(triple, "src", None), getattr(triple, "dst", None)
        if src == dst:
            violations.append("self-loops are not allowed")
        if get_node_type is not None:
            src_type = get_node_type(src)
            dst_type = get_node_type(dst)
            if src_type is None:
                violations.append(f"dangling endpoint: {src}")
            if dst_type is None:
                violations.append(f"dangling endpoint: {dst}")
            if rel is not None and src_type is not None and rel.allowed_src \
                    and src_type not in rel.allowed_src:
                violations.append(
                    f"relation {rel.name!r} does not allow source type {src_type!r}"
                )
            if rel is not None and dst_type is not None and rel.allowed_dst \
                    and dst_type not in rel.allowed_dst:
                violations.append(
                    f"relation {rel.name!r} does not allow target type {dst_type!r}"
                )
        return violations

    # -- persistence ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ontology_version": self.version,
            "entity_types": [t.to_dict() for t in self.entity_types.values()],
            "relation_types": [r.to_dict() for r in self.relation_types.values()],
            "hierarchy_policy": {"flatten_threshold": self.hierarchy_policy.flatten_threshold},
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "Registry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        reg = cls()
        for td in data.get("entity_types", []):
            t = EntityType.from_dict(td)
            reg.entity_types[t.name] = t
        for rd in data.get("relation_types", []):
            r = RelationType.from_dict(rd)
            reg.relation_types[r.name] = r
        reg.hierarchy_policy = HierarchyPolicy(
            data.get("hierarchy_policy", {}).get("flatten_threshold", 8))
        reg.version = int(data.get("ontology_version", 1))
        return reg


def _kind_matches(kind: ValueKind, value) -> bool:
    if kind is ValueKind.TEXT:
        return isinstance(value, str)
    if kind is ValueKind.NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is ValueKind.LIST_OF_TEXT:
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if kind is ValueKind.MAP:
        return isinstance(value, dict)
    return False


# Structured-feed types named across the source corpora, layered on top
# of the seed. Versions bump once per registration.

CATALOG_ENTITY_TYPES = (
    EntityType("vuln", Dimension.VULNERABILITY, Origin.STRUCTURED,
               _DESC + (("severity", ValueKind.TEXT),
                        ("published", ValueKind.TEXT),
                        ("versions", ValueKind.LIST_OF_TEXT),
                        ("cvss", ValueKind.MAP))),
    EntityType("version", Dimension.VULNERABILITY, Origin.STRUCTURED, _DESC),
    EntityType("score", Dimension.VULNERABILITY, Origin.STRUCTURED,
               _DESC + (("base", ValueKind.NUMBER),
                        ("vector", ValueKind.TEXT),
                        ("metrics", ValueKind.MAP))),
    EntityType("cwe", Dimension.VULNERABILITY, Origin.STRUCTURED, _DESC),
    EntityType("cpe", Dimension.VULNERABILITY, Origin.STRUCTURED, _DESC),
    EntityType("infras", Dimension.VULNERABILITY, Origin.STRUCTURED, _DESC),
    EntityType("exp", Dimension.ATTACK, Origin.STRUCTURED,
               _DESC + (("platform", ValueKind.TEXT),)),
    EntityType("attack_pattern", Dimension.ATTACK, Origin.STRUCTURED, _DESC),
    EntityType("defend_technique", Dimension.DEFENSE, Origin.STRUCTURED, _DESC),
    EntityType("sensor", Dimension.DEFENSE, Origin.STRUCTURED, _DESC),
    EntityType("data_model", Dimension.DEFENSE, Origin.STRUCTURED, _DESC),
    EntityType("analytics", Dimension.DEFENSE, Origin.STRUCTURED, _DESC),
    EntityType("implementations", Dimension.DEFENSE, Origin.STRUCTURED, _DESC),
)

CATALOG_RELATION_TYPES = (
    RelationType("consist", frozenset({"analytics"}), frozenset({"implementations"})),
    RelationType("affect", frozenset({"vuln"}), frozenset({"version"})),
    RelationType("affects", frozenset({"vulnerability"}),
                 frozenset({"product", "version"}), Origin.UNSTRUCTURED),
    RelationType("has_cvss", frozenset({"vuln"}), frozenset({"score"})),
    RelationType("map", frozenset({"sensor"}), frozenset({"data_model"})),
    RelationType("exploited_by", frozenset({"vuln"}), frozenset({"exp"})),
    RelationType("counter", frozenset({"defend_technique"}), frozenset({"technique"})),
    RelationType("used_by", frozenset({"cwe"}), frozenset({"attack_pattern"})),
    RelationType("detects", frozenset({"data_model", "analytics", "sensor"}),
                 frozenset({"technique"})),
)


def load_default_catalog(registry: Registry) -> int:
    """Register the structured-feed catalog; returns the new version."""
    for t in CATALOG_ENTITY_TYPES:
        registry.register_entity_type(t)
    version = registry.version
    for r in CATALOG_RELATION_TYPES:
        version = registry.register_relation_type(r)
    return version


def default_registry() -> Registry:
    """Seed plus the full structured catalog; what the engine runs with."""
    reg = Registry.seed()
    load_default_catalog(reg)
    return reg

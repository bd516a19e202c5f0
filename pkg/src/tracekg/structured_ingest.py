"""Plugin framework for structured feeds.

A SourceDescriptor registers one feed: where it lives (fixture directory
or paginated HTTP endpoint), how raw fields map onto the unified schema,
and how sub-structures (version lists, CVSS blocks) and cross-record
references become child nodes and edges. Full crawls fetch everything;
incremental crawls return only records newer than the per-source
watermark. Normalization is pure and total on valid records; malformed
records are skipped and counted, never fatal to a crawl.
"""

from __future__ import annotations

import json
import re
import time as _time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import CrawlError, PluginError, RecordRejected
from .graph_store import GraphStore, Node, Triple, Watermark, mint_node_id
from .ontology import HierarchyAction, HierarchyPolicy, Registry, decide_hierarchy
from .util import parse_timestamp

CATEGORIES = ("vulnerability_db", "exploit_platform", "attack_framework", "community")

DESCRIPTION_CAP = 16 * 1024  # bytes of text kept per description field
TRUNCATION_MARKER = " [truncated]"

# Raw property names folded onto the unified schema during normalization.
PROPERTY_ALIASES = {
    "desc": "description",
    "summary": "description",
    "title": "name",
}


@dataclass
class ChildSpec:
    """How one payload field becomes child nodes linked to the record.

    List fields go through the hierarchy policy: small lists flatten into
    a labelled property, large ones become one child node per element.
    Map fields always become a single child carrying the map entries.
    """

    field: str
    child_type: str
    relation: str
    parent_to_child: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ChildSpec":
        return cls(field=d["field"], child_type=d["child_type"],
                   relation=d["relation"],
                   parent_to_child=d.get("parent_to_child", True))


@dataclass
class RefSpec:
    """A payload field naming other records of the same source by native
    id; each value becomes one edge to (direction=out) or from
    (direction=in) the referenced node."""

    field: str
    relation: str
    other_type: str
    direction: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "RefSpec":
        return cls(field=d["field"], relation=d["relation"],
                   other_type=d["other_type"], direction=d.get("direction", "out"))


@dataclass
class SourceDescriptor:
    """Registration record for one structured feed plugin."""

    name: str
    category: str
    locator: str  # fixture directory or HTTP endpoint
    field_map: dict  # raw field name -> unified property name
    id_field: str
    timestamp_field: str
    full_interval_s: int = 7 * 24 * 3600
    incremental_interval_s: int = 3600
    entity_type: str = ""   # fixed record type, or:
    type_field: str = ""    # payload field carrying the record type
    children: list = field(default_factory=list)   # ChildSpec
    refs: list = field(default_factory=list)       # RefSpec
    extract_patterns: dict = field(default_factory=dict)  # field -> regex (group 1 kept)
    page_size: int = 50
    politeness_s: float = 0.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise PluginError(f"unknown category: {self.category!r}")
        if self.incremental_interval_s > self.full_interval_s:
            raise PluginError("incremental_interval must be <= full_interval")
        if not self.entity_type and not self.type_field:
            raise PluginError(f"plugin {self.name!r} needs entity_type or type_field")

    @classmethod
    def from_dict(cls, d: dict) -> "SourceDescriptor":
        return cls(
            name=d["name"], category=d["category"], locator=d["locator"],
            field_map=d.get("field_map", {}), id_field=d["id_field"],
            timestamp_field=d.get("timestamp_field", ""),
            full_interval_s=d.get("full_interval_s", 7 * 24 * 3600),
            incremental_interval_s=d.get("incremental_interval_s", 3600),
            entity_type=d.get("entity_type", ""),
            type_field=d.get("type_field", ""),
            children=[ChildSpec.from_dict(c) for c in d.get("children", [])],
            refs=[RefSpec.from_dict(r) for r in d.get("refs", [])],
            extract_patterns=d.get("extract_patterns", {}),
            page_size=d.get("page_size", 50),
            politeness_s=d.get("politeness_s", 0.0),
        )


@dataclass
class RawRecord:
    """One fetched record before normalization."""

    source: str
    native_id: str
    fetched_at: datetime
    record_time: datetime
    payload: dict
    time_fallback: bool = False  # record carried no timestamp; fetch time used


class PluginRegistry:
    """Holds registered feed plugins; names are unique."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self.plugins: dict[str, SourceDescriptor] = {}

    def register_plugin(self, d: SourceDescriptor) -> SourceDescriptor:
        if d.name in self.plugins:
            raise PluginError(f"plugin {d.name!r} already registered")
        if not d.field_map:
            raise PluginError(f"plugin {d.name!r} has an empty field map")
        known = {"name", "description"}
        for etype in self.registry.entity_types.values():
            known.update(p for p, _ in etype.property_schema)
        for unified in d.field_map.values():
            if unified not in known:
                raise PluginError(
                    f"plugin {d.name!r} maps to unregistered property {unified!r}")
        self.plugins[d.name] = d
        return d

    def get(self, name: str) -> SourceDescriptor:
        if name not in self.plugins:
            raise PluginError(f"unknown plugin: {name!r}")
        return self.plugins[name]


def load_plugins(path: Path | str, registry: Registry) -> PluginRegistry:
    """Load a plugins.json array. Relative (non-HTTP) locators resolve
    against the plugins file's own directory."""
    path = Path(path)
    base = path.resolve().parent
    plugins = PluginRegistry(registry)
    for entry in json.loads(path.read_text(encoding="utf-8")):
        descriptor = SourceDescriptor.from_dict(entry)
        if not descriptor.locator.startswith(("http://", "https://")) \
                and not Path(descriptor.locator).is_absolute():
            descriptor.locator = str(base / descriptor.locator)
        plugins.register_plugin(descriptor)
    return plugins


# -- crawling -------------------------------------------------------------------

@dataclass
class CrawlResult:
    records: list
    skipped: int = 0  # malformed records: skipped, logged, counted

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def full_crawl(d: SourceDescriptor, now: datetime | None = None) -> CrawlResult:
    """Fetch every record the source has, regardless of watermark."""
    fetched_at = parse_timestamp(now) if now is not None else _utcnow()
    if d.locator.startswith(("http://", "https://")):
        raw_payloads = _fetch_http(d)
    else:
        raw_payloads = _fetch_directory(d)
    records, skipped = [], 0
    for native_hint, payload in raw_payloads:
        if payload is None:
            skipped += 1
            continue
        native_id = str(payload.get(d.id_field) or native_hint or "")
        if not native_id:
            skipped += 1
            continue
        record_time, fallback = _record_time(payload, d, fetched_at)
        records.append(RawRecord(source=d.name, native_id=native_id,
                                 fetched_at=fetched_at, record_time=record_time,
                                 payload=payload, time_fallback=fallback))
    records.sort(key=lambda r: r.native_id)
    return CrawlResult(records=records, skipped=skipped)


def incremental_crawl(d: SourceDescriptor, watermark: Watermark,
                      now: datetime | None = None) -> CrawlResult:
    """Exactly the records newer than the watermark and not newer than now."""
    if watermark.source != d.name:
        raise CrawlError(f"watermark for {watermark.source!r} used with {d.name!r}")
    result = full_crawl(d, now=now)
    upper = parse_timestamp(now) if now is not None else result.records[0].fetched_at \
        if result.records else _utcnow()
    fresh = [r for r in result.records
             if watermark.last_timestamp < r.record_time <= upper]
    return CrawlResult(records=fresh, skipped=result.skipped)


def _record_time(payload: dict, d: SourceDescriptor, fetched_at: datetime):
    raw = payload.get(d.timestamp_field) if d.timestamp_field else None
    if raw in (None, ""):
        return fetched_at, True
    try:
        return parse_timestamp(raw), False
    except ValueError:
        return fetched_at, True


def _fetch_directory(d: SourceDescriptor):
    root = Path(d.locator)
    if not root.is_dir():
        raise CrawlError(f"fixture directory not found: {d.locator}")
    for path in sorted(root.glob("*.json")):
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(payload, dict):
                raise ValueError("payload is not a JSON object")
            yield path.stem, payload
        except (ValueError, OSError):
            yield path.stem, None


def _fetch_http(d: SourceDescriptor):
    import requests

    page = 1
    while True:
        url = f"{d.locator}{'&' if '?' in d.locator else '?'}page={page}&size={d.page_size}"
        body = _get_with_retries(url)
        items = body.get("records", [])
        for item in items:
            yield None, item if isinstance(item, dict) else None
        if len(items) < d.page_size:
            return
        page += 1
        if d.politeness_s:
            _time.sleep(d.politeness_s)


def _get_with_retries(url: str, attempts: int = 3, backoff: float = 0.2):
    import requests

    last = None
    for attempt in range(attempts):
        try:
            response = requests.get(url, timeout=30)
            response.raise_for_status()
            return response.json()
        except (requests.RequestException, ValueError) as exc:
            last = exc
            _time.sleep(backoff * (2 ** attempt))
    raise CrawlError(f"unreachable locator {url}: {last}")


def _utcnow() -> datetime:
    from datetime import timezone

    return datetime.now(tz=timezone.utc)


# -- deduplication ----------------------------------------------------------------

def dedup(records: list) -> list:
    """One record per (source, native_id), keeping the latest record time;
    output ordered by native id."""
    best: dict[tuple, RawRecord] = {}
    for record in records:
        key = (record.source, record.native_id)
        current = best.get(key)
        if current is None or record.record_time > current.record_time:
            best[key] = record
    return [best[key] for key in sorted(best)]


# -- normalization -----------------------------------------------------------------

def normalize(record: RawRecord, d: SourceDescriptor, registry: Registry,
              policy: HierarchyPolicy | None = None):
    """Apply the field map, truncation, and tailored extraction patterns;
    expand child specs (hierarchy policy decides flatten vs child nodes)
    and reference specs. Returns (nodes, triples); every node passes
    validation or the record is rejected with a reason."""
    policy = policy or registry.hierarchy_policy
    payload = record.payload
    type_name = d.entity_type or str(payload.get(d.type_field, ""))
    etype = registry.entity_types.get(type_name)
    if etype is None:
        raise RecordRejected(record.native_id, f"unknown mapped type {type_name!r}")
    if not record.native_id:
        raise RecordRejected(record.native_id, f"missing id field {d.id_field!r}")

    consumed = {d.id_field, d.timestamp_field, d.type_field}
    consumed.update(c.field for c in d.children)
    consumed.update(r.field for r in d.refs)

    properties: dict = {}
    name = record.native_id
    description = ""
    for raw_field, unified in d.field_map.items():
        if raw_field in consumed or raw_field not in payload:
            continue
        unified = PROPERTY_ALIASES.get(unified, unified)
        value = _apply_pattern(payload[raw_field], d.extract_patterns.get(raw_field))
        if unified == "name":
            name = str(value)
        elif unified == "description":
            description = _truncate(str(value))
        else:
            properties[unified] = _coerce(value, etype.kind_of(unified))

    node_id = mint_node_id(d.name, type_name, native_id=record.native_id)
    parent = Node(id=node_id, type=type_name, name=name, source=d.name,
                  timestamp=record.fetched_at, description=description,
                  properties=properties)

    nodes = [parent]
    triples = []
    for spec in d.children:
        value = payload.get(spec.field)
        if value in (None, "", [], {}):
            continue
        if isinstance(value, list):
            action = decide_hierarchy(etype, len(value), policy)
            if action is HierarchyAction.FLATTEN_WITH_SUBLABELS:
                unified = PROPERTY_ALIASES.get(d.field_map.get(spec.field, spec.field),
                                               d.field_map.get(spec.field, spec.field))
                parent.properties[unified] = [f"{spec.field}: {v}" for v in value]
                continue
            for item in value:
                child, edge = _child_node(record, d, spec, str(item), {},
                                          registry)
                nodes.append(child)
                triples.append(edge)
        elif isinstance(value, dict):
            child, edge = _child_node(record, d, spec, spec.field, value, registry)
            nodes.append(child)
            triples.append(edge)
        else:
            child, edge = _child_node(record, d, spec, str(value), {}, registry)
            nodes.append(child)
            triples.append(edge)

    for spec in d.refs:
        values = payload.get(spec.field) or []
        if isinstance(values, str):
            values = [values]
        for ref in values:
            other_id = mint_node_id(d.name, spec.other_type, native_id=str(ref))
            src, dst = (node_id, other_id) if spec.direction == "out" else (other_id, node_id)
            triples.append(Triple(src=src, relation=spec.relation, dst=dst,
                                  source=d.name, timestamp=record.fetched_at))

    for node in nodes:
        violations = registry.validate_node(node)
        if violations:
            raise RecordRejected(record.native_id, "; ".join(violations))
    return nodes, triples


def _child_node(record: RawRecord, d: SourceDescriptor, spec: ChildSpec,
                label: str, mapping: dict, registry: Registry):
    child_etype = registry.entity_types.get(spec.child_type)
    if child_etype is None:
        raise RecordRejected(record.native_id,
                             f"unknown child type {spec.child_type!r}")
    native = f"{record.native_id}:{label}"
    child_id = mint_node_id(d.name, spec.child_type, native_id=native)
    properties = {}
    for key, value in mapping.items():
        properties[key] = _coerce(value, child_etype.kind_of(key))
    child = Node(id=child_id, type=spec.child_type, name=label, source=d.name,
                 timestamp=record.fetched_at, description="", properties=properties)
    parent_id = mint_node_id(d.name, d.entity_type or record.payload.get(d.type_field, ""),
                             native_id=record.native_id)
    src, dst = (parent_id, child_id) if spec.parent_to_child else (child_id, parent_id)
    edge = Triple(src=src, relation=spec.relation, dst=dst, source=d.name,
                  timestamp=record.fetched_at)
    return child, edge


def _apply_pattern(value, pattern: str | None):
    if pattern is None or not isinstance(value, str):
        return value
    match = re.search(pattern, value)
    if match is None:
        return value
    return match.group(1) if match.groups() else match.group(0)


def _truncate(text: str) -> str:
    if len(text.encode("utf-8")) <= DESCRIPTION_CAP:
        return text
    clipped = text.encode("utf-8")[:DESCRIPTION_CAP].decode("utf-8", errors="ignore")
    return clipped + TRUNCATION_MARKER


def _coerce(value, kind):
    from .ontology import ValueKind

    if kind is None:
        return value if not isinstance(value, (dict, list)) else value
    if kind is ValueKind.TEXT and not isinstance(value, str):
        return str(value)
    if kind is ValueKind.NUMBER and isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if kind is ValueKind.LIST_OF_TEXT and isinstance(value, list):
        return [str(v) for v in value]
    return value


# -- store commit -------------------------------------------------------------------

@dataclass
class IngestReport:
    source: str
    nodes_inserted: int = 0
    nodes_updated: int = 0
    nodes_unchanged: int = 0
    triples_inserted: int = 0
    triples_unchanged: int = 0
    rejected_records: list = field(default_factory=list)  # (native_id, reason)
    rejected_triples: list = field(default_factory=list)  # (triple id, reason)
    skipped: int = 0

    def total_nodes(self) -> int:
        return self.nodes_inserted + self.nodes_updated + self.nodes_unchanged


def ingest_records(records: list, d: SourceDescriptor, store: GraphStore,
                   policy: HierarchyPolicy | None = None) -> IngestReport:
    """Normalize and commit a crawled batch: all nodes first, then edges,
    so cross-record references resolve regardless of record order."""
    from .errors import StoreError
    from .graph_store import UpsertResult

    report = IngestReport(source=d.name)
    all_nodes, all_triples = [], []
    for record in records:
        try:
            nodes, triples = normalize(record, d, store.registry, policy)
        except RecordRejected as exc:
            report.rejected_records.append((exc.native_id, exc.reason))
            continue
        all_nodes.extend(nodes)
        all_triples.extend(triples)
    for node in all_nodes:
        result = store.upsert_node(node)
        if result is UpsertResult.INSERTED:
            report.nodes_inserted += 1
        elif result is UpsertResult.UPDATED:
            report.nodes_updated += 1
        else:
            report.nodes_unchanged += 1
    for triple in all_triples:
        try:
            result = store.upsert_triple(triple)
        except StoreError as exc:
            report.rejected_triples.append((triple.id, str(exc)))
            continue
        if result is UpsertResult.INSERTED:
            report.triples_inserted += 1
        else:
            report.triples_unchanged += 1
    return report

"""Typed property-graph store with append-log persistence.

Nodes and triples live in one logical collection per type/relation. With
a directory the store appends one JSONL line per mutation and rebuilds
its in-memory indexes on open; without one it is purely in-memory.
Snapshots (export/import) use a separate compacted format: one file per
collection with canonical, key-sorted JSON lines ordered by id, plus a
manifest with record counts and the ontology version.

Node ids follow the scheme ``source:type:native-id``; when a feed has no
native id a content hash of (type, name, source) takes its place. Triples
deduplicate on (src, relation, dst, source).

Single logical writer: mutating calls take an internal lock, reads are
safe at any time. Mutating from several threads is a contract violation;
the lock merely keeps it from corrupting state.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path

from .errors import (
    ContractError,
    DanglingEndpointError,
    SnapshotError,
    StoreError,
    StoreValidationError,
    TypeMismatchError,
    UnknownNodeError,
    WatermarkError,
)
from .ontology import Registry
from .util import EPOCH, canon_dumps, format_timestamp, parse_timestamp, short_hash


def mint_node_id(source: str, type_name: str, native_id: str | None = None,
                 name: str | None = None) -> str:
    """Build ``source:type:native-id``; hash (type, name, source) when the
    feed supplies no native id. Slashes are not allowed in ids (they must
    survive as URL path segments)."""
    if not native_id:
        if not name:
            raise ContractError("either native_id or name is required to mint an id")
        native_id = short_hash(f"{type_name}|{name}|{source}")
    native_id = native_id.replace("/", "_")
    return f"{source}:{type_name}:{native_id}"


def native_id_of(node_id: str) -> str:
    """The native-id part of a node id (everything after source and type)."""
    parts = node_id.split(":", 2)
    return parts[2] if len(parts) == 3 else node_id


def triple_key(src: str, relation: str, dst: str, source: str) -> tuple:
    return (src, relation, dst, source)


def mint_triple_id(src: str, relation: str, dst: str, source: str) -> str:
    return "t:" + short_hash("|".join((src, relation, dst, source)))


@dataclass
class Node:
    """A typed graph entity with provenance and collection timestamp."""

    id: str
    type: str
    name: str
    source: str
    timestamp: datetime
    description: str = ""
    properties: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "name": self.name,
            "source": self.source,
            "timestamp": format_timestamp(self.timestamp),
            "description": self.description,
            "properties": self.properties,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        return cls(
            id=d["id"], type=d["type"], name=d["name"], source=d["source"],
            timestamp=parse_timestamp(d["timestamp"]),
            description=d.get("description", ""),
            properties=d.get("properties", {}) or {},
        )


@dataclass
class Triple:
    """A directed, typed edge; identity is (src, relation, dst, source)."""

    src: str
    relation: str
    dst: str
    source: str
    timestamp: datetime
    provenance: str | None = None  # document id for extracted edges
    id: str = ""

    def __post_init__(self):
        if not self.id:
            self.id = mint_triple_id(self.src, self.relation, self.dst, self.source)

    @property
    def key(self) -> tuple:
        return triple_key(self.src, self.relation, self.dst, self.source)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "src": self.src,
            "relation": self.relation,
            "dst": self.dst,
            "source": self.source,
            "timestamp": format_timestamp(self.timestamp),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Triple":
        return cls(
            src=d["src"], relation=d["relation"], dst=d["dst"], source=d["source"],
            timestamp=parse_timestamp(d["timestamp"]),
            provenance=d.get("provenance"), id=d.get("id", ""),
        )


class UpsertResult(Enum):
    INSERTED = "inserted"
    UPDATED = "updated"
    UNCHANGED = "unchanged"


class DegreeClass(Enum):
    ISOLATED = "isolated"    # degree 0
    ONE_EDGE = "one_edge"    # degree 1, in+out
    MULTI_EDGE = "multi_edge"


@dataclass
class Watermark:
    """Per-source high-water record timestamp; never regresses."""

    source: str
    last_timestamp: datetime


_NODE_FILE = re.compile(r"^nodes_([a-z][a-z0-9_]*)\.jsonl$")
_TRIPLE_FILE = re.compile(r"^triples_([a-z][a-z0-9_]*)\.jsonl$")


class GraphStore:
    """Property graph over a schema registry, optionally disk-backed."""

    def __init__(self, registry: Registry, path: Path | str | None = None):
        self.registry = registry
        self.path = Path(path) if path is not None else None
        self._nodes: dict[str, Node] = {}
        self._triples: dict[tuple, Triple] = {}
        self._by_type: dict[str, set] = {}
        self._out: dict[str, set] = {}
        self._in: dict[str, set] = {}
        self._watermarks: dict[str, datetime] = {}
        self._write_lock = threading.RLock()
        if self.path is not None:
            self.path.mkdir(parents=True, exist_ok=True)
            self._replay_log()

    # -- log persistence --------------------------------------------------

    def _log_file(self, kind: str, name: str) -> Path:
        return self.path / f"{kind}_{name}.jsonl"

    def _append(self, kind: str, name: str, entry: dict) -> None:
        if self.path is None:
            return
        with self._log_file(kind, name).open("a", encoding="utf-8") as fh:
            fh.write(canon_dumps(entry) + "\n")

    def _replay_log(self) -> None:
        for file in sorted(self.path.glob("nodes_*.jsonl")):
            if not _NODE_FILE.match(file.name):
                continue
            for entry in _read_jsonl(file):
                if entry.get("op") == "del":
                    self._drop_node_from_memory(entry["id"])
                else:
                    self._put_node_in_memory(Node.from_dict(entry["record"]))
        for file in sorted(self.path.glob("triples_*.jsonl")):
            if not _TRIPLE_FILE.match(file.name):
                continue
            for entry in _read_jsonl(file):
                if entry.get("op") == "del":
                    key = tuple(entry["key"])
                    self._drop_triple_from_memory(key)
                else:
                    self._put_triple_in_memory(Triple.from_dict(entry["record"]))
        wm_file = self.path / "watermarks.jsonl"
        if wm_file.exists():
            for entry in _read_jsonl(wm_file):
                self._watermarks[entry["source"]] = parse_timestamp(entry["last_timestamp"])

    def _put_node_in_memory(self, node: Node) -> None:
        self._nodes[node.id] = node
        self._by_type.setdefault(node.type, set()).add(node.id)

    def _drop_node_from_memory(self, node_id: str) -> None:
        node = self._nodes.pop(node_id, None)
        if node is not None:
            self._by_type.get(node.type, set()).discard(node_id)

    def _put_triple_in_memory(self, triple: Triple) -> None:
        self._triples[triple.key] = triple
        self._out.setdefault(triple.src, set()).add(triple.key)
        self._in.setdefault(triple.dst, set()).add(triple.key)

    def _drop_triple_from_memory(self, key: tuple) -> None:
        triple = self._triples.pop(key, None)
        if triple is not None:
            self._out.get(triple.src, set()).discard(key)
            self._in.get(triple.dst, set()).discard(key)

    # -- nodes -------------------------------------------------------------

    def upsert_node(self, node: Node) -> UpsertResult:
        violations = self.registry.validate_node(node)
        if violations:
            raise StoreValidationError(node.id, violations)
        with self._write_lock:
            old = self._nodes.get(node.id)
            if old is None:
                self._put_node_in_memory(node)
                self._append("nodes", node.type, {"op": "put", "record": node.to_dict()})
                return UpsertResult.INSERTED
            if old.type != node.type:
                raise StoreValidationError(
                    node.id, [f"type change {old.type!r} -> {node.type!r} is not allowed"])
            merged = _merge_nodes(old, node)
            if merged.to_dict() == old.to_dict():
                return UpsertResult.UNCHANGED
            self._put_node_in_memory(merged)
            self._append("nodes", merged.type, {"op": "put", "record": merged.to_dict()})
            return UpsertResult.UPDATED

    def get_node(self, node_id: str) -> Node:
        node = self._nodes.get(node_id)
        if node is None:
            raise UnknownNodeError(node_id)
        return node

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node_type(self, node_id: str) -> str | None:
        node = self._nodes.get(node_id)
        return node.type if node is not None else None

    def remove_node(self, node_id: str) -> None:
        """Remove an edge-free node (used to drop merged-away shells)."""
        with self._write_lock:
            node = self.get_node(node_id)
            if self.degree(node_id) != 0:
                raise StoreError(f"cannot remove {node_id}: degree > 0")
            self._drop_node_from_memory(node_id)
            self._append("nodes", node.type, {"op": "del", "id": node_id})

    def nodes_by_type(self, type_name: str):
        """Nodes of one type, ordered by id."""
        for node_id in sorted(self._by_type.get(type_name, ())):
            yield self._nodes[node_id]

    def all_nodes(self):
        for node_id in sorted(self._nodes):
            yield self._nodes[node_id]

    # -- triples -----------------------------------------------------------

    def upsert_triple(self, triple: Triple) -> UpsertResult:
        for endpoint in (triple.src, triple.dst):
            if endpoint not in self._nodes:
                raise DanglingEndpointError(endpoint)
        violations = self.registry.validate_triple(triple, self.node_type)
        if violations:
            raise StoreValidationError(triple.id, violations)
        with self._write_lock:
            if triple.key in self._triples:
                return UpsertResult.UNCHANGED
            self._put_triple_in_memory(triple)
            self._append("triples", triple.relation,
                         {"op": "put", "record": triple.to_dict()})
            return UpsertResult.INSERTED

    def triples_by_relation(self, relation: str):
        for key in sorted(k for k in self._triples if k[1] == relation):
            yield self._triples[key]

    def all_triples(self):
        for key in sorted(self._triples):
            yield self._triples[key]

    # -- traversal -----------------------------------------------------------

    def degree(self, node_id: str) -> int:
        return len(self._out.get(node_id, ())) + len(self._in.get(node_id, ()))

    def degree_class(self, node_id: str) -> DegreeClass:
        if node_id not in self._nodes:
            raise UnknownNodeError(node_id)
        d = self.degree(node_id)
        if d == 0:
            return DegreeClass.ISOLATED
        if d == 1:
            return DegreeClass.ONE_EDGE
        return DegreeClass.MULTI_EDGE

    def neighbors(self, node_id: str, relation: str | None = None,
                  direction: str = "both") -> list:
        """Incident edges with their far-end nodes, ordered by
        (relation, far-end id, direction)."""
        if node_id not in self._nodes:
            raise UnknownNodeError(node_id)
        if direction not in ("out", "in", "both"):
            raise ContractError(f"direction must be out|in|both, got {direction!r}")
        found = []
        if direction in ("out", "both"):
            for key in self._out.get(node_id, ()):
                t = self._triples[key]
                if relation is None or t.relation == relation:
                    found.append((t.relation, t.dst, 0, t))
        if direction in ("in", "both"):
            for key in self._in.get(node_id, ()):
                t = self._triples[key]
                if relation is None or t.relation == relation:
                    found.append((t.relation, t.src, 1, t))
        found.sort(key=lambda item: (item[0], item[1], item[2], item[3].key))
        return [(t, self._nodes[far]) for _, far, _, t in found]

    def find_path(self, src: str, dst: str, max_hops: int,
                  directed: bool = False) -> list | None:
        """Shortest path as a triple list, or None. Edge directions are
        ignored unless ``directed``; ties follow the deterministic
        neighbor order. ``src == dst`` yields the empty path."""
        for node_id in (src, dst):
            if node_id not in self._nodes:
                raise UnknownNodeError(node_id)
        if max_hops < 1:
            raise ContractError("max_hops must be >= 1")
        if src == dst:
            return []
        parent: dict[str, tuple] = {src: None}
        frontier = [src]
        for _ in range(max_hops):
            next_frontier = []
            for node_id in frontier:
                direction = "out" if directed else "both"
                for triple, far in self.neighbors(node_id, direction=direction):
                    if far.id in parent:
                        continue
                    parent[far.id] = (node_id, triple)
                    if far.id == dst:
                        return _rebuild_path(parent, dst)
                    next_frontier.append(far.id)
            if not next_frontier:
                return None
            frontier = next_frontier
        return None

    def redirect_edges(self, from_id: str, to_id: str) -> int:
        """Move every edge incident to ``from_id`` onto ``to_id``.

        Duplicates created by the move collapse under the
        (src, relation, dst, source) rule and would-be self-loops are
        dropped; returns the number of edges detached from ``from_id``.
        """
        with self._write_lock:
            src_node = self.get_node(from_id)
            dst_node = self.get_node(to_id)
            if from_id == to_id:
                raise ContractError("redirect_edges requires two distinct nodes")
            if src_node.type != dst_node.type:
                raise TypeMismatchError(
                    f"cannot redirect {src_node.type!r} onto {dst_node.type!r}")
            incident = sorted(self._out.get(from_id, set()) | self._in.get(from_id, set()))
            moved = 0
            for key in incident:
                old = self._triples[key]
                new_src = to_id if old.src == from_id else old.src
                new_dst = to_id if old.dst == from_id else old.dst
                self._drop_triple_from_memory(key)
                self._append("triples", old.relation, {"op": "del", "key": list(key)})
                moved += 1
                if new_src == new_dst:
                    continue  # edge between the merging pair: nothing to keep
                new = Triple(src=new_src, relation=old.relation, dst=new_dst,
                             source=old.source, timestamp=old.timestamp,
                             provenance=old.provenance)
                if new.key in self._triples:
                    continue  # collapses with an existing edge
                self._put_triple_in_memory(new)
                self._append("triples", new.relation,
                             {"op": "put", "record": new.to_dict()})
            return moved

    # -- counts ------------------------------------------------------------

    def counts(self) -> dict:
        return {
            "nodes": len(self._nodes),
            "edges": len(self._triples),
            "node_types_in_use": sum(1 for ids in self._by_type.values() if ids),
            "edge_types_in_use": len({k[1] for k in self._triples}),
        }

    # -- watermarks ----------------------------------------------------------

    def get_watermark(self, source: str) -> Watermark:
        return Watermark(source, self._watermarks.get(source, EPOCH))

    def set_watermark(self, source: str, t: datetime) -> None:
        t = parse_timestamp(t)
        with self._write_lock:
            current = self._watermarks.get(source, EPOCH)
            if t < current:
                raise WatermarkError(
                    f"watermark for {source!r} cannot regress: "
                    f"{format_timestamp(t)} < {format_timestamp(current)}")
            self._watermarks[source] = t
            if self.path is not None:
                with (self.path / "watermarks.jsonl").open("a", encoding="utf-8") as fh:
                    fh.write(canon_dumps({"source": source,
                                          "last_timestamp": format_timestamp(t)}) + "\n")

    # -- snapshots -----------------------------------------------------------

    def export_snapshot(self, target: Path | str) -> dict:
        """Write compacted, canonical collections plus manifest.json."""
        target = Path(target)
        target.mkdir(parents=True, exist_ok=True)
        collections = {}
        for type_name in sorted(t for t, ids in self._by_type.items() if ids):
            file_name = f"nodes_{type_name}.jsonl"
            with (target / file_name).open("w", encoding="utf-8") as fh:
                count = 0
                for node in self.nodes_by_type(type_name):
                    fh.write(canon_dumps(node.to_dict()) + "\n")
                    count += 1
            collections[file_name] = count
        for relation in sorted({k[1] for k in self._triples}):
            file_name = f"triples_{relation}.jsonl"
            with (target / file_name).open("w", encoding="utf-8") as fh:
                count = 0
                for triple in self.triples_by_relation(relation):
                    fh.write(canon_dumps(triple.to_dict()) + "\n")
                    count += 1
            collections[file_name] = count
        manifest = {
            "collections": collections,
            "nodes": len(self._nodes),
            "edges": len(self._triples),
            "ontology_version": self.registry.version,
        }
        (target / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return manifest

    def import_snapshot(self, source_dir: Path | str) -> dict:
        """Load a snapshot into an empty store; returns the manifest."""
        source_dir = Path(source_dir)
        if self._nodes or self._triples:
            raise SnapshotError("import requires an empty store")
        manifest_path = source_dir / "manifest.json"
        if not manifest_path.exists():
            raise SnapshotError(f"missing manifest.json in {source_dir}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        node_files = sorted(f for f in manifest.get("collections", {}) if f.startswith("nodes_"))
        triple_files = sorted(f for f in manifest.get("collections", {}) if f.startswith("triples_"))
        for file_name in node_files:
            for record in _read_snapshot_lines(source_dir / file_name):
                self.upsert_node(Node.from_dict(record))
        for file_name in triple_files:
            for record in _read_snapshot_lines(source_dir / file_name):
                self.upsert_triple(Triple.from_dict(record))
        got = self.counts()
        if got["nodes"] != manifest.get("nodes") or got["edges"] != manifest.get("edges"):
            raise SnapshotError(
                f"manifest mismatch: expected {manifest.get('nodes')} nodes / "
                f"{manifest.get('edges')} edges, loaded {got['nodes']} / {got['edges']}")
        return manifest


def _merge_nodes(old: Node, new: Node) -> Node:
    """Field-wise last-writer-wins by timestamp; lists are set-unioned and
    an empty name/description never overwrites a non-empty one."""
    new_is_later = new.timestamp >= old.timestamp
    winner, loser = (new, old) if new_is_later else (old, new)
    properties = dict(loser.properties)
    for prop, value in winner.properties.items():
        if isinstance(value, list) and isinstance(properties.get(prop), list):
            properties[prop] = sorted(set(properties[prop]) | set(value))
        else:
            properties[prop] = value
    return Node(
        id=old.id,
        type=old.type,
        name=winner.name or loser.name,
        source=old.source,
        timestamp=max(old.timestamp, new.timestamp),
        description=winner.description or loser.description,
        properties=properties,
    )


def _rebuild_path(parent: dict, dst: str) -> list:
    path = []
    cursor = dst
    while parent[cursor] is not None:
        prev, triple = parent[cursor]
        path.append(triple)
        cursor = prev
    path.reverse()
    return path


def _read_jsonl(path: Path):
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SnapshotError(f"malformed JSON: {exc.msg}",
                                    path=str(path), line=line_no) from exc


def _read_snapshot_lines(path: Path):
    if not path.exists():
        raise SnapshotError(f"missing snapshot collection: {path.name}")
    yield from _read_jsonl(path)

"""Entity standardization and alignment.

Freshly extracted candidates are standardized into store nodes, compared
against same-type graph nodes by description-embedding similarity, gated
by the threshold theta, and either inserted as new nodes or merged into
their counterpart with edge redirection. A shared native id (CVE and
friends) short-circuits similarity entirely: same id, same entity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .doc_pipeline import CandidateNode
from .errors import ContractError, OracleUnavailable, StoreError
from .filter_validate import KNOWN_IDENTIFIERS, is_serial_only_name
from .graph_store import GraphStore, Node, Triple, UpsertResult, mint_node_id, native_id_of
from .oracle_gateway import cosine
from .util import canon_dumps

# Candidate property names folded onto the unified schema.
PROPERTY_ALIASES = {"desc": "description", "summary": "description"}


@dataclass
class AlignmentConfig:
    """Similarity threshold, candidate budget, and the embedder in use."""

    embedder: object = None  # anything with .embed(text) -> EmbeddingVector
    theta: float = 0.9
    top_k: int = 20

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ContractError(f"theta must be in (0, 1], got {self.theta}")
        if self.top_k < 1:
            raise ContractError(f"top_k must be >= 1, got {self.top_k}")


@dataclass
class AlignmentDecision:
    """Outcome of matching one standardized candidate against the graph."""

    candidate: Node
    outcome: str                 # "new_node" | "merged"
    target: str | None = None    # merge target node id
    best_similarity: float = 0.0
    path: str = "no_candidate_above_theta"  # | "adjudicated" | "id_match"

    def __post_init__(self):
        if self.outcome == "merged" and not self.target:
            raise ContractError("merged decisions need a target")
        if self.outcome == "new_node" and self.target:
            raise ContractError("new-node decisions cannot carry a target")

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.id,
            "outcome": self.outcome,
            "target": self.target,
            "best_similarity": round(self.best_similarity, 6),
            "path": self.path,
        }


def _is_known_identifier(name: str) -> bool:
    return any(p.match(name.strip()) for p in KNOWN_IDENTIFIERS)


def standardize(c: CandidateNode, source_tag: str, now: datetime,
                registry=None) -> Node:
    """Turn a filtered candidate into a store-ready node: unified property
    names, the source tag, the collection timestamp, and a minted id.

    Candidates named by a well-known identifier keep it as their native
    id so that id-based matching works across sources; anything else gets
    a content hash. Properties with no unified mapping move under an
    ``extra`` map rather than being dropped."""
    properties = {}
    extra = {}
    for key, value in getattr(c, "properties", {}).items():
        unified = PROPERTY_ALIASES.get(key, key)
        known = registry is None or (
            registry.entity_types.get(c.type) is not None
            and registry.entity_types[c.type].kind_of(unified) is not None)
        if known:
            properties[unified] = value
        else:
            extra[key] = value
    if extra:
        properties["extra"] = extra
    native = c.name if _is_known_identifier(c.name) else None
    node_id = mint_node_id(source_tag, c.type, native_id=native, name=c.name)
    return Node(id=node_id, type=c.type, name=c.name, source=source_tag,
                timestamp=now, description=c.description, properties=properties)


def similarity_text(node: Node) -> str:
    """Description when present; otherwise name and type stand in so
    structured stubs never compare as vacuously dissimilar."""
    return node.description or f"{node.name} {node.type}"


def candidate_set(n: Node, store: GraphStore, cfg: AlignmentConfig) -> list:
    """Same-type store nodes ranked by description-embedding cosine,
    descending; ties break toward the smaller node id. At most top_k
    entries, except that a node sharing the candidate's native id is
    always included so id matching cannot fall off the shortlist."""
    query = cfg.embedder.embed(similarity_text(n))
    ranked = []
    for other in store.nodes_by_type(n.type):
        sim = cosine(query, cfg.embedder.embed(similarity_text(other)))
        ranked.append((-sim, other.id, other, sim))
    ranked.sort(key=lambda item: (item[0], item[1]))
    selected = [(other, sim) for _, _, other, sim in ranked[:cfg.top_k]]
    native = native_id_of(n.id).casefold()
    chosen_ids = {other.id for other, _ in selected}
    for _, _, other, sim in ranked[cfg.top_k:]:
        if other.id not in chosen_ids and native_id_of(other.id).casefold() == native:
            selected.append((other, sim))
    return selected


def align_entity(n: Node, cands: list, cfg: AlignmentConfig,
                 oracle) -> AlignmentDecision:
    """Decide merge target or new node for one standardized candidate.

    Identifier equality wins outright; otherwise similarities below theta
    mean a new node and the at-or-above-theta subset goes to the oracle,
    which may still say none of them match."""
    if not cands:
        return AlignmentDecision(candidate=n, outcome="new_node",
                                 best_similarity=0.0,
                                 path="no_candidate_above_theta")
    best_similarity = max(sim for _, sim in cands)
    native = native_id_of(n.id).casefold()
    for other, sim in cands:
        if native_id_of(other.id).casefold() == native:
            return AlignmentDecision(candidate=n, outcome="merged", target=other.id,
                                     best_similarity=sim, path="id_match")
    above = [(other, sim) for other, sim in cands if sim >= cfg.theta]
    if not above:
        return AlignmentDecision(candidate=n, outcome="new_node",
                                 best_similarity=best_similarity,
                                 path="no_candidate_above_theta")
    target = oracle.adjudicate_match(n, above, cfg.theta)
    if target is None:
        return AlignmentDecision(candidate=n, outcome="new_node",
                                 best_similarity=best_similarity, path="adjudicated")
    return AlignmentDecision(candidate=n, outcome="merged", target=target,
                             best_similarity=best_similarity, path="adjudicated")


@dataclass
class ApplyReport:
    node_result: str = ""
    triples_inserted: int = 0
    triples_unchanged: int = 0
    rewrites: int = 0
    collapses: int = 0
    shells_removed: int = 0


def apply_decision(d: AlignmentDecision, store: GraphStore,
                   pending_triples: list) -> ApplyReport:
    """Write one decision into the store.

    New nodes are inserted with their accepted triples. Merges rewrite
    the pending triples onto the target, then redirect any edges hanging
    off a previously inserted shell before removing it; triples are
    rewritten before shells go away, so no dangling state is observable.
    """
    report = ApplyReport()
    if d.outcome == "new_node":
        if is_serial_only_name(d.candidate.name) and not pending_triples:
            raise ContractError(
                f"isolated serial-only candidate {d.candidate.id} reached alignment; "
                "filtering must run first")
        report.node_result = store.upsert_node(d.candidate).value
        final_id = d.candidate.id
    else:
        target = store.get_node(d.target)
        merged_properties = dict(d.candidate.properties)
        merged_properties.update(target.properties)  # target's values win
        merged = Node(
            id=target.id, type=target.type,
            name=target.name, source=target.source,
            timestamp=max(target.timestamp, d.candidate.timestamp),
            description=target.description or d.candidate.description,
            properties=merged_properties,
        )
        report.node_result = store.upsert_node(merged).value
        final_id = target.id

    for triple in pending_triples:
        src = final_id if triple.src == d.candidate.id else triple.src
        dst = final_id if triple.dst == d.candidate.id else triple.dst
        if (src, dst) != (triple.src, triple.dst):
            report.rewrites += 1
        if src == dst:
            report.collapses += 1
            continue
        rewritten = Triple(src=src, relation=triple.relation, dst=dst,
                           source=triple.source, timestamp=triple.timestamp,
                           provenance=triple.provenance)
        if store.upsert_triple(rewritten) is UpsertResult.INSERTED:
            report.triples_inserted += 1
        else:
            report.triples_unchanged += 1

    if d.outcome == "merged" and d.candidate.id != final_id \
            and store.has_node(d.candidate.id):
        edges_before = store.counts()["edges"]
        store.redirect_edges(d.candidate.id, final_id)
        # edges lost to dedup or self-loop drops during redirection
        report.collapses += edges_before - store.counts()["edges"]
        store.remove_node(d.candidate.id)
        report.shells_removed = 1
    return report


@dataclass
class BatchReport:
    new: int = 0
    merged: int = 0
    deferred: list = field(default_factory=list)  # candidate ids needing a retry
    decisions: list = field(default_factory=list)
    triples_inserted: int = 0
    triples_unchanged: int = 0
    triples_deferred: int = 0
    shells_removed: int = 0

    def to_dict(self) -> dict:
        return {
            "new": self.new,
            "merged": self.merged,
            "deferred": sorted(self.deferred),
            "decisions": [d.to_dict() for d in self.decisions],
            "triples_inserted": self.triples_inserted,
            "triples_unchanged": self.triples_unchanged,
            "triples_deferred": self.triples_deferred,
            "shells_removed": self.shells_removed,
        }


def align_batch(nodes: list, triples: list, store: GraphStore,
                cfg: AlignmentConfig, oracle) -> BatchReport:
    """Align a filtered, standardized batch in deterministic (type, name)
    order: one decision per node, then every triple rewritten onto the
    surviving ids. Oracle failures defer a node (and its triples) to the
    next run instead of failing the batch."""
    report = BatchReport()
    id_map: dict[str, str] = {}
    for node in sorted(nodes, key=lambda n: (n.type, n.name, n.id)):
        cands = candidate_set(node, store, cfg)
        try:
            decision = align_entity(node, cands, cfg, oracle)
        except OracleUnavailable:
            report.deferred.append(node.id)
            continue
        sub_report = apply_decision(decision, store, [])
        report.shells_removed += sub_report.shells_removed
        report.decisions.append(decision)
        if decision.outcome == "new_node":
            report.new += 1
            id_map[node.id] = node.id
        else:
            report.merged += 1
            id_map[node.id] = decision.target

    deferred_ids = set(report.deferred)
    for triple in triples:
        if triple.src in deferred_ids or triple.dst in deferred_ids:
            report.triples_deferred += 1
            continue
        src = id_map.get(triple.src, triple.src)
        dst = id_map.get(triple.dst, triple.dst)
        if src == dst:
            continue  # the two endpoints merged into one node
        rewritten = Triple(src=src, relation=triple.relation, dst=dst,
                           source=triple.source, timestamp=triple.timestamp,
                           provenance=triple.provenance)
        try:
            result = store.upsert_triple(rewritten)
        except StoreError:
            report.triples_deferred += 1
            continue
        if result is UpsertResult.INSERTED:
            report.triples_inserted += 1
        else:
            report.triples_unchanged += 1
    return report


def write_batch_report(report: BatchReport, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canon_dumps(report.to_dict()) + "\n", encoding="utf-8")
    return path

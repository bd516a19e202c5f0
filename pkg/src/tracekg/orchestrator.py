"""The update cycle: structured ingest, document extraction, filtering,
and alignment run in order against one store, with watermarks advanced
only for stages that completed. A scheduler fires cycles at a fixed
spacing and never overlaps them; the HTTP service (api module) reads the
same store concurrently.

Documents already handled in a previous cycle are skipped via a small
state file kept next to the store; feeds are re-polled incrementally via
their watermarks, so re-running a cycle over unchanged inputs is a
no-op."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import align as align_mod
from . import doc_pipeline as docs_mod
from . import structured_ingest as ingest_mod
from .errors import ContractError, OracleUnavailable, TraceError
from .filter_validate import SanitizeRules, filter_nodes, sanitize_text
from .graph_store import GraphStore, Triple
from .ontology import HierarchyPolicy
from .oracle_gateway import RetrievalRepository
from .util import format_timestamp, parse_timestamp

logger = logging.getLogger("tracekg")

GENRE_SOURCE_TAGS = {
    "paper": "papers",
    "apt_report": "apt_reports",
    "repair_notice": "repair_notices",
}


@dataclass
class CycleConfig:
    """Everything one update cycle needs besides the store and oracle."""

    plugins: list = field(default_factory=list)      # SourceDescriptor
    doc_dirs: list = field(default_factory=list)     # paths of document fixtures
    align: object = None                             # AlignmentConfig
    delta_seconds: float = 3600.0
    sanitize_rules: SanitizeRules = field(default_factory=SanitizeRules.defaults)
    hierarchy: HierarchyPolicy = field(default_factory=HierarchyPolicy)
    genre_schemas: dict = field(default_factory=docs_mod.default_genre_schemas)
    retrieval_k: int = 5

    def __post_init__(self):
        if self.delta_seconds <= 0:
            raise ContractError("delta must be positive")


@dataclass
class CycleState:
    """Cross-cycle bookkeeping persisted beside the store."""

    cycle_counter: int = 0
    processed_docs: set = field(default_factory=set)
    last_full: dict = field(default_factory=dict)  # source -> RFC 3339 string

    @classmethod
    def load(cls, store_path: Path | None) -> "CycleState":
        if store_path is None:
            return cls()
        path = Path(store_path) / "engine_state.json"
        if not path.exists():
            return cls()
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls(cycle_counter=data.get("cycle_counter", 0),
                   processed_docs=set(data.get("processed_docs", [])),
                   last_full=data.get("last_full", {}))

    def save(self, store_path: Path | None) -> None:
        if store_path is None:
            return
        path = Path(store_path) / "engine_state.json"
        path.write_text(json.dumps({
            "cycle_counter": self.cycle_counter,
            "processed_docs": sorted(self.processed_docs),
            "last_full": self.last_full,
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class CycleReport:
    cycle_id: int
    started: str
    finished: str = ""
    records_ingested: int = 0
    records_skipped: int = 0
    records_rejected: int = 0
    per_source: dict = field(default_factory=dict)
    docs_seen: int = 0
    docs_screened_in: int = 0
    docs_screened_out: int = 0
    docs_deferred: int = 0
    nodes_extracted: int = 0
    nodes_filtered_out: int = 0
    decisions: dict = field(default_factory=lambda: {"new": 0, "merged": 0, "deferred": 0})
    triples_added: int = 0
    errors: list = field(default_factory=list)
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "cycle_id": self.cycle_id,
            "started": self.started,
            "finished": self.finished,
            "records_ingested": self.records_ingested,
            "records_skipped": self.records_skipped,
            "records_rejected": self.records_rejected,
            "per_source": self.per_source,
            "docs_seen": self.docs_seen,
            "docs_screened_in": self.docs_screened_in,
            "docs_screened_out": self.docs_screened_out,
            "docs_deferred": self.docs_deferred,
            "nodes_extracted": self.nodes_extracted,
            "nodes_filtered_out": self.nodes_filtered_out,
            "decisions": self.decisions,
            "triples_added": self.triples_added,
            "errors": self.errors,
            "degraded": self.degraded,
        }


def run_update_cycle(cfg: CycleConfig, store: GraphStore, oracle,
                     now: datetime | None = None,
                     state: CycleState | None = None,
                     repo: RetrievalRepository | None = None) -> CycleReport:
    """One full pass: feeds, documents, filtering, alignment, bookkeeping.

    ``now`` pins the logical collection time for reproducible runs; a
    stage failure marks the report degraded and the remaining stages
    still run where that is safe."""
    time_c = parse_timestamp(now) if now is not None else datetime.now(tz=timezone.utc)
    state = state if state is not None else CycleState.load(store.path)
    state.cycle_counter += 1
    report = CycleReport(cycle_id=state.cycle_counter,
                         started=format_timestamp(time_c))
    if repo is None and cfg.align is not None and cfg.align.embedder is not None:
        repo = RetrievalRepository(cfg.align.embedder)

    _structured_stage(cfg, store, time_c, state, report)
    extraction_records = _document_stage(cfg, store, oracle, time_c, state, report, repo)
    batch_nodes, batch_triples, docs_of_node = _filter_and_standardize(
        cfg, store, extraction_records, time_c, report)
    _alignment_stage(cfg, store, oracle, batch_nodes, batch_triples,
                     docs_of_node, state, report)

    report.finished = format_timestamp(time_c)
    state.save(store.path)
    if store.path is not None:
        reports_dir = store.path / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        (reports_dir / f"cycle_{report.cycle_id:06d}.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return report


def _structured_stage(cfg, store, time_c, state, report) -> None:
    for plugin in sorted(cfg.plugins, key=lambda p: p.name):
        try:
            last_full = state.last_full.get(plugin.name)
            due_full = last_full is None or (
                (time_c - parse_timestamp(last_full)).total_seconds()
                >= plugin.full_interval_s)
            if due_full:
                crawl = ingest_mod.full_crawl(plugin, now=time_c)
                state.last_full[plugin.name] = format_timestamp(time_c)
            else:
                watermark = store.get_watermark(plugin.name)
                crawl = ingest_mod.incremental_crawl(plugin, watermark, now=time_c)
            records = ingest_mod.dedup(crawl.records)
            ingest_report = ingest_mod.ingest_records(records, plugin, store,
                                                      cfg.hierarchy)
            report.per_source[plugin.name] = {
                "records": len(records),
                "skipped": crawl.skipped,
                "rejected": len(ingest_report.rejected_records),
                "mode": "full" if due_full else "incremental",
            }
            report.records_ingested += len(records)
            report.records_skipped += crawl.skipped
            report.records_rejected += len(ingest_report.rejected_records)
            store.set_watermark(plugin.name, time_c)
        except TraceError as exc:
            report.errors.append(f"structured:{plugin.name}: {exc}")
            report.degraded = True
            logger.warning("feed %s failed: %s", plugin.name, exc)


def _document_stage(cfg, store, oracle, time_c, state, report, repo) -> list:
    records = []
    for doc_dir in cfg.doc_dirs:
        try:
            documents = docs_mod.load_documents(doc_dir)
        except (OSError, TraceError) as exc:
            report.errors.append(f"docs:{doc_dir}: {exc}")
            report.degraded = True
            continue
        for document in documents:
            if document.id in state.processed_docs:
                continue
            report.docs_seen += 1
            try:
                decision = docs_mod.screen_relevance(document, oracle)
            except OracleUnavailable:
                report.docs_deferred += 1
                continue
            if not decision.passed:
                report.docs_screened_out += 1
                state.processed_docs.add(document.id)
                continue
            report.docs_screened_in += 1
            schema = cfg.genre_schemas[document.genre]
            record = docs_mod.run_extraction(document, schema, oracle,
                                             repo=repo, retrieval_k=cfg.retrieval_k)
            if store.path is not None:
                docs_mod.write_extraction(record, store.path / "extractions")
            records.append(record)
            if record.partial:
                report.docs_deferred += 1  # retried next cycle
            else:
                state.processed_docs.add(document.id)
    return records


def _filter_and_standardize(cfg, store, extraction_records, time_c, report):
    batch_nodes = []
    batch_triples = []
    candidate_ids = {}
    docs_of_node: dict[str, set] = {}
    for record in extraction_records:
        for node in record.nodes:
            node.name = sanitize_text(node.name, cfg.sanitize_rules)
            node.description = sanitize_text(node.description, cfg.sanitize_rules)
        accepted = record.accepted_triples()
        filtered = filter_nodes(record.nodes, accepted, store=store)
        report.nodes_extracted += len(record.nodes)
        report.nodes_filtered_out += len(filtered.dropped)
        source_tag = GENRE_SOURCE_TAGS[record.doc.genre]
        for node in filtered.kept:
            standardized = align_mod.standardize(node, source_tag, time_c,
                                                 registry=store.registry)
            candidate_ids[id(node)] = standardized.id
            docs_of_node.setdefault(standardized.id, set()).add(record.doc.id)
            batch_nodes.append(standardized)
        for cand in accepted:
            src_id = candidate_ids.get(id(cand.src))
            dst_id = candidate_ids.get(id(cand.dst))
            if src_id is None or dst_id is None:
                continue  # endpoint was filtered out
            batch_triples.append(Triple(
                src=src_id, relation=cand.relation, dst=dst_id,
                source=source_tag, timestamp=time_c, provenance=cand.provenance))
    return batch_nodes, batch_triples, docs_of_node


def _alignment_stage(cfg, store, oracle, batch_nodes, batch_triples,
                     docs_of_node, state, report) -> None:
    if cfg.align is None:
        return
    batch = align_mod.align_batch(batch_nodes, batch_triples, store,
                                  cfg.align, oracle)
    report.decisions["new"] += batch.new
    report.decisions["merged"] += batch.merged
    report.decisions["deferred"] += len(batch.deferred)
    report.triples_added += batch.triples_inserted
    for deferred_id in batch.deferred:
        # A deferred node keeps its documents unprocessed for a retry.
        for doc_id in docs_of_node.get(deferred_id, ()):
            state.processed_docs.discard(doc_id)
    if store.path is not None and (batch.decisions or batch.deferred):
        align_mod.write_batch_report(
            batch, store.path / "extractions" / f"cycle_{report.cycle_id:06d}_alignment.json")


def schedule(cfg: CycleConfig, store: GraphStore, oracle,
             stop_event: threading.Event, max_cycles: int | None = None) -> list:
    """Run cycles at delta spacing, start to start. A cycle that overruns
    its slot skips the missed starts (overlap is forbidden); a stop
    signal lets the running cycle finish and then exits the loop."""
    if cfg.delta_seconds <= 0:
        raise ContractError("delta must be positive")
    reports = []
    next_start = time.monotonic()
    while not stop_event.is_set():
        if max_cycles is not None and len(reports) >= max_cycles:
            break
        reports.append(run_update_cycle(cfg, store, oracle))
        next_start += cfg.delta_seconds
        behind = time.monotonic() - next_start
        if behind > 0:
            missed = int(behind // cfg.delta_seconds) + 1
            logger.warning("cycle overran its slot; skipping %d start(s)", missed)
            next_start += missed * cfg.delta_seconds
        stop_event.wait(max(0.0, next_start - time.monotonic()))
    return reports

"""The ``trace`` command line tool.

Subcommands mirror the pipeline stages: ingest feeds, extract from
documents, align batches, run full update cycles, compute metrics, query
the graph, serve the HTTP API, and move snapshots in and out. A JSON
config file wires stores, plugins, document directories, and the oracle
(mock by default; remote settings pull their API key from the
environment, never from the file)."""

from __future__ import annotations

import argparse
import json
import sys
import threading
from datetime import datetime, timezone
from pathlib import Path

from . import api as api_mod
from . import doc_pipeline as docs_mod
from . import metrics as metrics_mod
from . import orchestrator as orch_mod
from .align import AlignmentConfig, align_batch, standardize, write_batch_report
from .errors import TraceError
from .filter_validate import SanitizeRules, filter_nodes
from .graph_store import GraphStore, Triple
from .ontology import HierarchyPolicy, Registry, default_registry
from .oracle_gateway import MockOracle, RemoteConfig, RemoteOracle, load_templates
from .structured_ingest import dedup, full_crawl, incremental_crawl, ingest_records, load_plugins
from .util import parse_timestamp


def _load_config(path: str | None) -> dict:
    """Read the engine config; relative paths inside it resolve against
    the config file's directory, so the CLI works from any cwd."""
    if path is None:
        return {}
    config_path = Path(path)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    base = config_path.resolve().parent

    def resolve(value):
        p = Path(value)
        return str(p if p.is_absolute() else base / p)

    for key in ("store_dir", "ontology", "sanitize_rules"):
        if config.get(key):
            config[key] = resolve(config[key])
    plugins = config.get("plugins")
    if isinstance(plugins, str):
        config["plugins"] = resolve(plugins)
    elif isinstance(plugins, list):
        for entry in plugins:
            locator = entry.get("locator", "")
            if locator and not locator.startswith(("http://", "https://")):
                entry["locator"] = resolve(locator)
    config["doc_dirs"] = [resolve(d) for d in config.get("doc_dirs", [])]
    oracle = config.get("oracle", {})
    for key in ("lexicon", "gazetteer", "templates_dir", "cache_dir", "call_log"):
        if oracle.get(key):
            oracle[key] = resolve(oracle[key])
    return config


def _open_registry(config: dict, store_dir: Path | None) -> Registry:
    explicit = config.get("ontology")
    if explicit:
        return Registry.load(explicit)
    if store_dir is not None and (store_dir / "ontology.json").exists():
        return Registry.load(store_dir / "ontology.json")
    return default_registry()


def _open_store(config: dict, args) -> GraphStore:
    store_dir = getattr(args, "store", None) or config.get("store_dir")
    store_path = Path(store_dir) if store_dir else None
    registry = _open_registry(config, store_path)
    store = GraphStore(registry, store_path)
    if store_path is not None and not (store_path / "ontology.json").exists():
        registry.save(store_path / "ontology.json")
    return store


def _build_oracle(config: dict, override: str | None = None):
    spec = dict(config.get("oracle", {}))
    kind = override or spec.get("kind", "mock")
    if kind == "mock":
        return MockOracle.from_fixture_files(
            lexicon_path=spec.get("lexicon"), gazetteer_path=spec.get("gazetteer"))
    if kind == "remote":
        templates = load_templates(spec.get("templates_dir", "fixtures/prompts"))
        return RemoteOracle(RemoteConfig.from_dict(spec), templates)
    raise TraceError(f"unknown oracle kind: {kind!r}")


def _cycle_config(config: dict, store: GraphStore) -> orch_mod.CycleConfig:
    plugins = []
    plugin_spec = config.get("plugins")
    if isinstance(plugin_spec, str):
        plugins = list(load_plugins(plugin_spec, store.registry).plugins.values())
    elif isinstance(plugin_spec, list):
        from .structured_ingest import PluginRegistry, SourceDescriptor

        registry = PluginRegistry(store.registry)
        for entry in plugin_spec:
            plugins.append(registry.register_plugin(SourceDescriptor.from_dict(entry)))
    align_spec = config.get("align", {})
    oracle = _build_oracle(config)
    embedder = getattr(oracle, "embedder", None) or oracle
    rules = SanitizeRules.load(config["sanitize_rules"]) \
        if config.get("sanitize_rules") else SanitizeRules.defaults()
    return orch_mod.CycleConfig(
        plugins=plugins,
        doc_dirs=[Path(p) for p in config.get("doc_dirs", [])],
        align=AlignmentConfig(embedder=embedder,
                              theta=align_spec.get("theta", 0.9),
                              top_k=align_spec.get("top_k", 20)),
        delta_seconds=config.get("delta_seconds", 3600),
        sanitize_rules=rules,
        hierarchy=HierarchyPolicy(
            config.get("hierarchy", {}).get("flatten_threshold", 8)),
    )


def _now_from(config: dict, args) -> datetime | None:
    pinned = getattr(args, "now", None) or config.get("now")
    return parse_timestamp(pinned) if pinned else None


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- subcommand handlers -----------------------------------------------------

def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    cfg = _cycle_config(config, store)
    plugin = next((p for p in cfg.plugins if p.name == args.source), None)
    if plugin is None:
        raise TraceError(f"unknown plugin: {args.source!r}")
    now = _now_from(config, args)
    if args.mode == "full":
        crawl = full_crawl(plugin, now=now)
    else:
        crawl = incremental_crawl(plugin, store.get_watermark(plugin.name), now=now)
    records = dedup(crawl.records)
    report = ingest_records(records, plugin, store, cfg.hierarchy)
    if now is not None or crawl.records:
        store.set_watermark(plugin.name, now or max(r.fetched_at for r in crawl.records))
    _print({
        "source": plugin.name, "mode": args.mode,
        "records": len(records), "skipped": crawl.skipped,
        "nodes_inserted": report.nodes_inserted,
        "nodes_updated": report.nodes_updated,
        "triples_inserted": report.triples_inserted,
        "rejected": len(report.rejected_records),
    })
    return 0


def cmd_extract(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    oracle = _build_oracle(config, override=args.oracle)
    schemas = docs_mod.default_genre_schemas()
    out_dir = Path(args.out) if args.out else (
        (store.path / "extractions") if store.path else Path("extractions"))
    summary = []
    for document in docs_mod.load_documents(args.docs):
        decision = docs_mod.screen_relevance(document, oracle)
        if not decision.passed:
            summary.append({"doc": document.id, "screened_out": decision.rationale})
            continue
        record = docs_mod.run_extraction(document, schemas[document.genre], oracle)
        path = docs_mod.write_extraction(record, out_dir)
        summary.append({"doc": document.id, "nodes": len(record.nodes),
                        "accepted_triples": len(record.accepted_triples()),
                        "file": str(path)})
    _print(summary)
    return 0


def cmd_align(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    oracle = _build_oracle(config)
    align_spec = config.get("align", {})
    cfg = AlignmentConfig(embedder=getattr(oracle, "embedder", oracle),
                          theta=align_spec.get("theta", 0.9),
                          top_k=align_spec.get("top_k", 20))
    batch_path = Path(args.batch)
    data = json.loads(batch_path.read_text(encoding="utf-8"))
    genre = data.get("genre", "paper")
    source_tag = orch_mod.GENRE_SOURCE_TAGS[genre]
    now = _now_from(config, args) or datetime.now(tz=timezone.utc)
    candidates = [docs_mod.CandidateNode(
        type=n["type"], name=n["name"], description=n.get("description", ""),
        extraction_method=n.get("extraction_method", "oracle"),
        confidence=n.get("confidence", 0.5)) for n in data.get("nodes", [])]
    by_key = {c.dedup_key(): c for c in candidates}
    accepted = []
    for t in data.get("triples", []):
        if t.get("verdict") != "accepted":
            continue
        src = by_key.get((t["src"]["type"], t["src"]["name"].casefold()))
        dst = by_key.get((t["dst"]["type"], t["dst"]["name"].casefold()))
        if src is None or dst is None:
            continue
        accepted.append(docs_mod.CandidateTriple(
            src=src, relation=t["relation"], dst=dst,
            verdict="accepted", provenance=t.get("provenance")))
    filtered = filter_nodes(candidates, accepted, store=store)
    ids = {}
    kept_nodes = []
    for c in filtered.kept:
        node = standardize(c, source_tag, now, registry=store.registry)
        ids[c.dedup_key()] = node.id
        kept_nodes.append(node)
    store_triples = []
    for cand in accepted:
        src_id, dst_id = ids.get(cand.src.dedup_key()), ids.get(cand.dst.dedup_key())
        if src_id is None or dst_id is None:
            continue
        store_triples.append(Triple(src=src_id, relation=cand.relation, dst=dst_id,
                                    source=source_tag, timestamp=now,
                                    provenance=cand.provenance))
    report = align_batch(kept_nodes, store_triples, store, cfg, oracle)
    report_path = batch_path.with_suffix(".align.json")
    write_batch_report(report, report_path)
    _print({"new": report.new, "merged": report.merged,
            "deferred": len(report.deferred),
            "triples_inserted": report.triples_inserted,
            "report": str(report_path)})
    return 0


def cmd_cycle(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    cfg = _cycle_config(config, store)
    oracle = _build_oracle(config)
    now = _now_from(config, args)
    if args.once:
        report = orch_mod.run_update_cycle(cfg, store, oracle, now=now)
        _print(report.to_dict())
        return 0
    stop = threading.Event()
    try:
        orch_mod.schedule(cfg, store, oracle, stop)
    except KeyboardInterrupt:
        stop.set()
    return 0


def cmd_metrics(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    if args.kind == "coverage":
        _print(metrics_mod.coverage_report(store).to_dict())
        return 0
    if args.kind == "density":
        if args.pairs:
            pairs = [tuple(spec.split(":")) for spec in args.pairs.split(",")]
        else:
            seen = sorted({(store.node_type(t.src), t.relation, store.node_type(t.dst))
                           for t in store.all_triples()})
            pairs = [p for p in seen if all(p)]
        rows = metrics_mod.density_table(store, pairs)
        if args.json:
            _print([row.__dict__ for row in rows])
        else:
            print(metrics_mod.format_density_table(rows))
        return 0
    if args.kind == "f1":
        if not args.gold or not args.pred:
            raise TraceError("metrics f1 needs --gold and --pred")
        gold = metrics_mod.load_annotations(args.gold)
        pred = metrics_mod.load_annotations(args.pred)
        _print(metrics_mod.eval_extraction_by_genre(gold, pred))
        return 0
    raise TraceError(f"unknown metrics kind: {args.kind!r}")


def cmd_query(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    if args.what == "node":
        _print(store.get_node(args.id).to_dict())
    elif args.what == "neighbors":
        pairs = store.neighbors(args.id, relation=args.relation,
                                direction=args.direction)
        _print([{"triple": t.to_dict(), "node": n.to_dict()} for t, n in pairs])
    elif args.what == "path":
        triples = store.find_path(args.src, args.dst, args.max_hops)
        if triples is None:
            _print({"found": False})
        else:
            _print({"found": True, "hops": len(triples),
                    "triples": [t.to_dict() for t in triples]})
    return 0


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    stop = threading.Event()
    worker = None
    if args.schedule:
        cfg = _cycle_config(config, store)
        oracle = _build_oracle(config)
        worker = threading.Thread(
            target=orch_mod.schedule, args=(cfg, store, oracle, stop), daemon=True)
        worker.start()
    try:
        api_mod.serve(store, port=args.port, host=args.host)
    finally:
        stop.set()
        if worker is not None:
            worker.join(timeout=5)
    return 0


def cmd_export(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    manifest = store.export_snapshot(args.path)
    _print(manifest)
    return 0


def cmd_import(args) -> int:
    config = _load_config(args.config)
    store = _open_store(config, args)
    manifest = store.import_snapshot(args.path)
    _print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace",
                                     description="threat knowledge graph engine")
    parser.add_argument("--config", default=None, help="engine config JSON")
    parser.add_argument("--store", default=None, help="store directory override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="crawl one structured feed into the store")
    p.add_argument("--source", required=True)
    p.add_argument("--mode", choices=("full", "incremental"), default="incremental")
    p.add_argument("--now", default=None, help="pin the collection timestamp")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("extract", help="run the document pipeline over a directory")
    p.add_argument("--docs", required=True)
    p.add_argument("--oracle", choices=("mock", "remote"), default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("align", help="align an extraction file into the store")
    p.add_argument("--batch", required=True)
    p.add_argument("--now", default=None)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("cycle", help="run the update cycle (once or scheduled)")
    p.add_argument("--once", action="store_true")
    p.add_argument("--now", default=None)
    p.set_defaults(fn=cmd_cycle)

    p = sub.add_parser("metrics", help="coverage, density, or F1 reports")
    p.add_argument("kind", choices=("coverage", "density", "f1"))
    p.add_argument("--gold", default=None)
    p.add_argument("--pred", default=None)
    p.add_argument("--pairs", default=None,
                   help="comma-separated src_type:relation:dst_type specs")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("query", help="node, neighbors, or path lookup")
    q = p.add_subparsers(dest="what", required=True)
    qn = q.add_parser("node")
    qn.add_argument("id")
    qe = q.add_parser("neighbors")
    qe.add_argument("id")
    qe.add_argument("--relation", default=None)
    qe.add_argument("--direction", choices=("out", "in", "both"), default="both")
    qp = q.add_parser("path")
    qp.add_argument("src")
    qp.add_argument("dst")
    qp.add_argument("--max-hops", type=int, default=4)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--port", type=int, default=8177)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--schedule", action="store_true",
                   help="also run the update cycle scheduler in this process")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("export", help="write a snapshot of the store")
    p.add_argument("--path", required=True)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("import", help="load a snapshot into an empty store")
    p.add_argument("--path", required=True)
    p.set_defaults(fn=cmd_import)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

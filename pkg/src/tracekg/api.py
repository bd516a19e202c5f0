"""Read-only HTTP query API over a graph store.

Everything lives under /v1: node lookup, neighbor expansion, substring
search, shortest paths, coverage metrics, and the registered type lists.
Pagination is limit/offset with deterministic ordering, and errors come
back as JSON {code, message}. No endpoint mutates the store."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import ContractError, UnknownNodeError
from .graph_store import GraphStore
from .metrics import coverage_report

DEFAULT_LIMIT = 50
MAX_LIMIT = 500


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _clamp(limit: int) -> int:
    return max(1, min(limit, MAX_LIMIT))


def create_app(store: GraphStore) -> FastAPI:
    app = FastAPI(title="trace graph API", version="1")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["GET"],
                       allow_headers=["*"])

    @app.get("/v1/nodes/{node_id}")
    def get_node(node_id: str):
        try:
            return store.get_node(node_id).to_dict()
        except UnknownNodeError:
            return _error(404, "unknown_node", f"no node with id {node_id!r}")

    @app.get("/v1/nodes/{node_id}/neighbors")
    def get_neighbors(node_id: str, relation: str | None = None,
                      direction: str = "both", limit: int = DEFAULT_LIMIT,
                      offset: int = 0):
        try:
            pairs = store.neighbors(node_id, relation=relation, direction=direction)
        except UnknownNodeError:
            return _error(404, "unknown_node", f"no node with id {node_id!r}")
        except ContractError as exc:
            return _error(400, "bad_request", str(exc))
        limit = _clamp(limit)
        page = pairs[offset:offset + limit]
        return {
            "items": [{"triple": t.to_dict(), "node": n.to_dict()} for t, n in page],
            "total": len(pairs),
            "limit": limit,
            "offset": offset,
        }

    @app.get("/v1/search")
    def search(q: str = "", type: str | None = None, limit: int = DEFAULT_LIMIT,
               offset: int = 0):
        if not q:
            return _error(400, "bad_request", "query parameter q is required")
        needle = q.casefold()
        nodes = store.nodes_by_type(type) if type else store.all_nodes()
        hits = [n for n in nodes
                if needle in n.name.casefold() or needle in n.id.casefold()]
        limit = _clamp(limit)
        return {
            "items": [n.to_dict() for n in hits[offset:offset + limit]],
            "total": len(hits),
            "limit": limit,
            "offset": offset,
        }

    @app.get("/v1/path")
    def get_path(src: str, dst: str, max_hops: int = 4):
        try:
            triples = store.find_path(src, dst, max_hops)
        except UnknownNodeError as exc:
            return _error(404, "unknown_node", str(exc))
        except ContractError as exc:
            return _error(400, "bad_request", str(exc))
        if triples is None:
            return {"found": False, "hops": None, "triples": [], "nodes": []}
        node_ids = [src]
        cursor = src
        for t in triples:
            cursor = t.dst if t.src == cursor else t.src
            node_ids.append(cursor)
        return {
            "found": True,
            "hops": len(triples),
            "triples": [t.to_dict() for t in triples],
            "nodes": [store.get_node(i).to_dict() for i in node_ids],
        }

    @app.get("/v1/metrics/summary")
    def metrics_summary():
        return coverage_report(store).to_dict()

    @app.get("/v1/types")
    def types():
        return {
            "entity_types": [t.to_dict() for _, t in
                             sorted(store.registry.entity_types.items())],
            "relation_types": [r.to_dict() for _, r in
                               sorted(store.registry.relation_types.items())],
            "ontology_version": store.registry.version,
        }

    return app


def serve(store: GraphStore, port: int = 8177, host: str = "127.0.0.1") -> None:
    """Run the API in the foreground (CLI entry point)."""
    import uvicorn

    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")

import pytest
from fastapi.testclient import TestClient

from tracekg.align import AlignmentConfig
from tracekg.api import create_app
from tracekg.graph_store import GraphStore, native_id_of
from tracekg.ontology import default_registry
from tracekg.orchestrator import CycleConfig, run_update_cycle
from tracekg.oracle_gateway import HashedBagEmbedder

from conftest import FIXTURES, NOW, case_study_plugins


@pytest.fixture(scope="module")
def case_store(tmp_path_factory):
    from tracekg.oracle_gateway import MockOracle

    registry = default_registry()
    store = GraphStore(registry, tmp_path_factory.mktemp("case") / "store")
    cfg = CycleConfig(
        plugins=case_study_plugins(),
        doc_dirs=[FIXTURES / "case_study" / "docs"],
        align=AlignmentConfig(embedder=HashedBagEmbedder(), theta=0.9, top_k=20),
        delta_seconds=3600,
    )
    oracle = MockOracle.from_fixture_files(
        lexicon_path=FIXTURES / "security_lexicon.json",
        gazetteer_path=FIXTURES / "gazetteer.json")
    run_update_cycle(cfg, store, oracle, now=NOW)
    return store


@pytest.fixture(scope="module")
def client(case_store):
    return TestClient(create_app(case_store))


def _node_id(store, native):
    return next(n.id for n in store.all_nodes() if native_id_of(n.id) == native)


class TestNodeEndpoints:
    def test_get_node_returns_provenance_fields(self, client, case_store):
        node_id = _node_id(case_store, "CVE-2021-26855")
        body = client.get(f"/v1/nodes/{node_id}").json()
        assert body["id"] == node_id
        assert body["type"] == "vulnerability"
        assert body["source"] and body["timestamp"]
        assert "description" in body

    def test_unknown_node_is_404_with_error_shape(self, client):
        response = client.get("/v1/nodes/no:such:id")
        assert response.status_code == 404
        assert set(response.json()) == {"code", "message"}

    def test_neighbors_uses_relation_filter(self, client, case_store):
        apt41 = next(n.id for n in case_store.nodes_by_type("group")
                     if n.name == "APT41")
        body = client.get(f"/v1/nodes/{apt41}/neighbors",
                          params={"relation": "uses", "direction": "out"}).json()
        natives = {native_id_of(item["node"]["id"]) for item in body["items"]}
        assert "T1190" in natives and "T1548" in natives

    def test_cve_neighborhood_includes_the_attributed_group(self, client, case_store):
        cve = _node_id(case_store, "CVE-2021-26855")
        body = client.get(f"/v1/nodes/{cve}/neighbors",
                          params={"direction": "both"}).json()
        names_by_type = {(i["node"]["type"], i["node"]["name"])
                         for i in body["items"]}
        assert ("group", "APT41") in names_by_type
        assert ("group", "Hafnium") in names_by_type

    def test_neighbors_pagination_is_deterministic(self, client, case_store):
        node_id = _node_id(case_store, "T1548")
        first = client.get(f"/v1/nodes/{node_id}/neighbors",
                           params={"limit": 2, "offset": 0}).json()
        second = client.get(f"/v1/nodes/{node_id}/neighbors",
                            params={"limit": 2, "offset": 2}).json()
        assert first["total"] == 4
        ids = [i["triple"]["id"] for i in first["items"] + second["items"]]
        assert len(set(ids)) == 4

    def test_bad_direction_is_400(self, client, case_store):
        node_id = _node_id(case_store, "T1548")
        response = client.get(f"/v1/nodes/{node_id}/neighbors",
                              params={"direction": "sideways"})
        assert response.status_code == 400


class TestSearchAndPath:
    def test_search_finds_the_cve(self, client):
        body = client.get("/v1/search", params={"q": "CVE-2021-26855"}).json()
        assert body["total"] == 1
        assert body["items"][0]["type"] == "vulnerability"

    def test_search_with_type_filter(self, client):
        body = client.get("/v1/search", params={"q": "T1190", "type": "technique"}).json()
        assert body["total"] == 1

    def test_search_requires_query(self, client):
        assert client.get("/v1/search").status_code == 400

    def test_path_from_cve_to_mitigation_within_4_hops(self, client, case_store):
        src = _node_id(case_store, "CVE-2021-26855")
        dst = _node_id(case_store, "M1051")
        body = client.get("/v1/path", params={"src": src, "dst": dst,
                                              "max_hops": 4}).json()
        assert body["found"] is True
        assert body["hops"] == 3
        assert len(body["nodes"]) == 4

    def test_absent_path_reports_not_found(self, client, case_store):
        src = _node_id(case_store, "CVE-2021-26855")
        gasboy = next(n.id for n in case_store.nodes_by_type("asset")
                      if n.name == "Gasboy")
        body = client.get("/v1/path", params={"src": src, "dst": gasboy,
                                              "max_hops": 4}).json()
        assert body["found"] is False

    def test_metrics_summary_shape(self, client):
        body = client.get("/v1/metrics/summary").json()
        assert body["nodes"] == 14 and body["edges"] == 11
        assert body["isolated"] == 1

    def test_types_lists_registry(self, client):
        body = client.get("/v1/types").json()
        names = {t["name"] for t in body["entity_types"]}
        assert {"vulnerability", "technique", "group"} <= names
        relations = {r["name"] for r in body["relation_types"]}
        assert {"uses", "mitigates", "belong_to"} <= relations


class TestReadOnly:
    def test_fuzzed_request_sequence_never_mutates_the_store(self, client, case_store):
        before = case_store.counts()
        node_id = _node_id(case_store, "T1548")
        for path, params in [
            ("/v1/search", {"q": "a"}),
            ("/v1/search", {"q": "'; DROP TABLE--", "type": "tool"}),
            (f"/v1/nodes/{node_id}", {}),
            (f"/v1/nodes/{node_id}/neighbors", {"limit": 9999}),
            (f"/v1/nodes/{node_id}/neighbors", {"offset": -5 % 3}),
            ("/v1/path", {"src": node_id, "dst": node_id, "max_hops": 1}),
            ("/v1/metrics/summary", {}),
            ("/v1/types", {}),
            ("/v1/nodes/../../etc/passwd", {}),
        ]:
            client.get(path, params=params)
        assert case_store.counts() == before

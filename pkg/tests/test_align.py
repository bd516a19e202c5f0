import random
from datetime import timedelta

import pytest

from tracekg.align import (
    AlignmentConfig,
    AlignmentDecision,
    align_batch,
    align_entity,
    apply_decision,
    candidate_set,
    similarity_text,
    standardize,
)
from tracekg.doc_pipeline import CandidateNode
from tracekg.errors import ContractError, OracleUnavailable
from tracekg.graph_store import GraphStore, Node, Triple, native_id_of
from tracekg.oracle_gateway import HashedBagEmbedder, MockOracle, cosine
from tracekg.ontology import default_registry

from conftest import NOW, make_node, make_triple


@pytest.fixture
def cfg():
    return AlignmentConfig(embedder=HashedBagEmbedder(), theta=0.9, top_k=20)


@pytest.fixture
def oracle():
    return MockOracle()


def _store_node(i, type_name="tool", description=None, source="kb"):
    return make_node(f"{source}:{type_name}:entry-{i:03d}", type_name,
                     f"Entry {i:03d}", source,
                     description=description or f"distinct text {i} entry")


class TestStandardize:
    def test_desc_property_becomes_description(self, registry):
        cand = CandidateNode(type="tool", name="OrpaCrab",
                             properties={"desc": "a backdoor"})
        node = standardize(cand, "apt_reports", NOW, registry=registry)
        assert node.properties["description"] == "a backdoor"

    def test_missing_description_falls_back_to_name_and_type(self, registry):
        cand = CandidateNode(type="tool", name="OrpaCrab")
        node = standardize(cand, "apt_reports", NOW, registry=registry)
        assert node.description == ""
        assert similarity_text(node) == "OrpaCrab tool"

    def test_same_name_different_sources_get_distinct_ids(self, registry):
        cand = CandidateNode(type="tool", name="OrpaCrab")
        a = standardize(cand, "apt_reports", NOW, registry=registry)
        b = standardize(cand, "papers", NOW, registry=registry)
        assert a.id != b.id

    def test_identifier_names_keep_their_native_id(self, registry):
        cand = CandidateNode(type="vulnerability", name="CVE-2021-26855")
        node = standardize(cand, "apt_reports", NOW, registry=registry)
        assert native_id_of(node.id) == "CVE-2021-26855"

    def test_unmappable_properties_carried_under_extra(self, registry):
        cand = CandidateNode(type="tool", name="X",
                             properties={"weird_field": "v"})
        node = standardize(cand, "apt_reports", NOW, registry=registry)
        assert node.properties["extra"] == {"weird_field": "v"}

    def test_result_passes_validation(self, registry):
        cand = CandidateNode(type="group", name="APT41", description="espionage")
        node = standardize(cand, "apt_reports", NOW, registry=registry)
        assert registry.validate_node(node) == []


class TestCandidateSet:
    def test_exact_twin_ranks_first_with_similarity_one(self, store, cfg):
        twin = _store_node(1, description="identical words here")
        store.upsert_node(twin)
        store.upsert_node(_store_node(2, description="unrelated material"))
        probe = make_node("docs:tool:p", "tool", "Probe", "docs",
                          description="identical words here")
        ranked = candidate_set(probe, store, cfg)
        assert ranked[0][0].id == twin.id
        assert ranked[0][1] == pytest.approx(1.0)

    def test_small_store_returns_everything(self, store, cfg):
        for i in range(3):
            store.upsert_node(_store_node(i))
        probe = make_node("docs:tool:p", "tool", "Probe", "docs",
                          description="anything")
        assert len(candidate_set(probe, store, cfg)) == 3

    def test_other_types_never_appear(self, store, cfg):
        store.upsert_node(_store_node(1, type_name="tool"))
        store.upsert_node(_store_node(2, type_name="group"))
        probe = make_node("docs:tool:p", "tool", "Probe", "docs",
                          description="anything")
        assert all(n.type == "tool" for n, _ in candidate_set(probe, store, cfg))

    def test_top20_matches_brute_force_prefix(self, store, cfg):
        # oracle: full sort of cosine scores, ties by id
        rng = random.Random(9)
        words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta",
                 "theta", "iota", "kappa"]
        for i in range(200):
            text = " ".join(rng.choice(words) for _ in range(6))
            store.upsert_node(_store_node(i, description=text))
        probe = make_node("docs:tool:p", "tool", "Probe", "docs",
                          description="alpha beta gamma delta")
        query = cfg.embedder.embed(similarity_text(probe))
        scored = sorted(
            ((-cosine(query, cfg.embedder.embed(similarity_text(n))), n.id)
             for n in store.nodes_by_type("tool")))
        expected = [node_id for _, node_id in scored[:20]]
        got = [n.id for n, _ in candidate_set(probe, store, cfg)]
        assert got == expected

    def test_native_id_twin_is_included_beyond_top_k(self, store, cfg):
        # bury an id twin under 25 high-similarity distractors
        for i in range(25):
            store.upsert_node(make_node(
                f"kb:vulnerability:decoy-{i:02d}", "vulnerability",
                f"Decoy {i}", "kb", description="exact same decoy text"))
        twin = make_node("kb:vulnerability:CVE-2024-7777", "vulnerability",
                         "CVE-2024-7777", "kb", description="totally unrelated")
        store.upsert_node(twin)
        probe = make_node("docs:vulnerability:CVE-2024-7777", "vulnerability",
                          "CVE-2024-7777", "docs",
                          description="exact same decoy text")
        ranked = candidate_set(probe, store, cfg)
        assert twin.id in [n.id for n, _ in ranked]


class TestAlignEntity:
    def test_id_match_wins_regardless_of_similarity(self, store, cfg, oracle):
        twin = make_node("nvd:vulnerability:CVE-2021-26855", "vulnerability",
                         "CVE-2021-26855", "nvd", description="completely other")
        store.upsert_node(twin)
        probe = make_node("docs:vulnerability:CVE-2021-26855", "vulnerability",
                          "CVE-2021-26855", "docs", description="fresh words")
        decision = align_entity(probe, candidate_set(probe, store, cfg), cfg, oracle)
        assert decision.outcome == "merged"
        assert decision.path == "id_match"
        assert decision.target == twin.id

    def test_below_theta_is_new_node(self, cfg, oracle):
        probe = make_node("docs:tool:p", "tool", "P", "docs", description="x")
        cands = [(_store_node(1), 0.72)]
        decision = align_entity(probe, cands, cfg, oracle)
        assert decision.outcome == "new_node"
        assert decision.path == "no_candidate_above_theta"
        assert decision.best_similarity == 0.72

    def test_band_adjudication_picks_clear_winner(self, cfg, oracle):
        probe = make_node("docs:tool:p", "tool", "P", "docs", description="x")
        a, b = _store_node(1), _store_node(2)
        decision = align_entity(probe, [(a, 0.96), (b, 0.93)], cfg, oracle)
        assert decision.outcome == "merged"
        assert decision.target == a.id
        assert decision.path == "adjudicated"

    def test_oracle_none_gives_new_node(self, cfg, oracle):
        probe = make_node("docs:tool:p", "tool", "P", "docs", description="x")
        decision = align_entity(probe, [(_store_node(1), 0.91)], cfg, oracle)
        assert decision.outcome == "new_node"
        assert decision.path == "adjudicated"

    def test_empty_candidates_is_new_node(self, cfg, oracle):
        probe = make_node("docs:tool:p", "tool", "P", "docs", description="x")
        decision = align_entity(probe, [], cfg, oracle)
        assert decision.outcome == "new_node"
        assert decision.best_similarity == 0.0


class TestApplyDecision:
    def test_merged_decision_moves_pending_triples(self, store, cfg):
        target = _store_node(1, type_name="group")
        tech = make_node("kb:technique:T1190", "technique", "T1190", "kb",
                         description="t")
        store.upsert_node(target)
        store.upsert_node(tech)
        candidate = make_node("docs:group:cand", "group", "Cand", "docs",
                              description="d")
        pending = [make_triple(candidate.id, tech.id, relation="uses",
                               source="docs") for _ in range(1)]
        pending += [Triple(src=candidate.id, relation="uses", dst=tech.id,
                           source=f"docs{i}", timestamp=NOW) for i in range(2)]
        decision = AlignmentDecision(candidate=candidate, outcome="merged",
                                     target=target.id, best_similarity=0.97,
                                     path="adjudicated")
        report = apply_decision(decision, store, pending)
        assert report.triples_inserted == 3
        # incidence oracle: every pending triple is now incident to the target
        incident = {t.key for t, _ in store.neighbors(target.id)}
        assert len(incident) == 3
        assert store.degree(candidate.id) if store.has_node(candidate.id) else 0 == 0

    def test_shell_redirection_and_removal(self, store, cfg):
        target = _store_node(1, type_name="group")
        shell = _store_node(2, type_name="group", source="docs")
        tech = make_node("kb:technique:T1190", "technique", "T1190", "kb",
                         description="t")
        for n in (target, shell, tech):
            store.upsert_node(n)
        store.upsert_triple(make_triple(shell.id, tech.id, relation="uses"))
        decision = AlignmentDecision(candidate=shell, outcome="merged",
                                     target=target.id, best_similarity=0.99,
                                     path="adjudicated")
        report = apply_decision(decision, store, [])
        assert report.shells_removed == 1
        assert not store.has_node(shell.id)
        assert store.degree(target.id) == 1

    def test_new_node_with_serial_name_and_no_triples_is_contract_error(self, store):
        candidate = make_node("docs:tool:00031", "tool", "00031", "docs",
                              description="")
        decision = AlignmentDecision(candidate=candidate, outcome="new_node")
        with pytest.raises(ContractError):
            apply_decision(decision, store, [])

    def test_reapplication_is_idempotent(self, store):
        candidate = make_node("docs:tool:orpacrab", "tool", "OrpaCrab", "docs",
                              description="a backdoor")
        decision = AlignmentDecision(candidate=candidate, outcome="new_node")
        apply_decision(decision, store, [])
        counts = store.counts()
        apply_decision(decision, store, [])
        assert store.counts() == counts

    def test_merged_keeps_target_properties(self, store):
        target = _store_node(1, type_name="group")
        target.properties["aliases"] = ["Winnti"]
        store.upsert_node(target)
        candidate = make_node("docs:group:cand", "group", "Cand", "docs",
                              description="d", aliases=["Other"], fresh="new")
        decision = AlignmentDecision(candidate=candidate, outcome="merged",
                                     target=target.id, best_similarity=0.99,
                                     path="adjudicated")
        apply_decision(decision, store, [])
        merged = store.get_node(target.id)
        assert merged.properties["aliases"] == ["Winnti"]
        assert merged.properties["fresh"] == "new"
        assert merged.name == target.name


def _batch_probe(name, description, type_name="tool", source="docs"):
    cand = CandidateNode(type=type_name, name=name, description=description)
    return standardize(cand, source, NOW, registry=default_registry())


class TestAlignBatch:
    def test_disjoint_batch_is_all_new(self, store, cfg, oracle):
        nodes = [_batch_probe(f"Fresh {i}", f"alpha{i} beta{i} gamma{i} delta{i}")
                 for i in range(4)]
        report = align_batch(nodes, [], store, cfg, oracle)
        assert report.new == 4 and report.merged == 0
        assert store.counts()["nodes"] == 4

    def test_exact_duplicate_batch_is_all_merged(self, store, cfg, oracle):
        originals = [_store_node(i, description=f"stable text {i} here")
                     for i in range(4)]
        for node in originals:
            store.upsert_node(node)
        twins = [_batch_probe(f"Twin {i}", f"stable text {i} here")
                 for i in range(4)]
        report = align_batch(twins, [], store, cfg, oracle)
        assert report.merged == 4 and report.new == 0
        assert store.counts()["nodes"] == 4

    def test_mixed_batch_counts_match_constructed_fixture(self, store, cfg, oracle):
        # fixture with a known twin set: 4 twins, 6 brand new
        for i in range(4):
            store.upsert_node(_store_node(i, description=f"known payload {i}"))
        batch = [_batch_probe(f"Twin {i}", f"known payload {i}") for i in range(4)]
        batch += [_batch_probe(f"New {i}", f"fresh{i} unseen{i} words{i} here{i}")
                  for i in range(6)]
        report = align_batch(batch, [], store, cfg, oracle)
        assert report.new == 6 and report.merged == 4
        assert store.counts()["nodes"] == 10

    def test_conservation_of_node_counts(self, store, cfg, oracle):
        for i in range(3):
            store.upsert_node(_store_node(i, description=f"payload {i}"))
        before = store.counts()["nodes"]
        batch = [_batch_probe("Twin 0", "payload 0"),
                 _batch_probe("Solo", "completely novel words")]
        report = align_batch(batch, [], store, cfg, oracle)
        assert store.counts()["nodes"] == before + report.new - report.shells_removed

    def test_second_run_is_a_no_op(self, store, cfg, oracle):
        batch = [_batch_probe(f"Fresh {i}", f"uniq{i} tok{i} mat{i} set{i}") for i in range(3)]
        triples = [Triple(src=batch[0].id, relation="uses", dst=batch[1].id,
                          source="docs", timestamp=NOW)]
        align_batch(batch, triples, store, cfg, oracle)
        snapshot = ([n.to_dict() for n in store.all_nodes()],
                    sorted(t.key for t in store.all_triples()))
        report = align_batch(batch, triples, store, cfg, oracle)
        assert report.new == 0
        assert snapshot == ([n.to_dict() for n in store.all_nodes()],
                            sorted(t.key for t in store.all_triples()))

    def test_threshold_monotonicity(self, oracle):
        # raising theta can only turn merges into new nodes, never the reverse
        rng = random.Random(13)
        words = ["red", "blue", "green", "cyan", "teal", "plum", "gold"]
        merged_names_by_theta = []
        for theta in (0.5, 0.7, 0.9, 0.99):
            store = GraphStore(default_registry())
            for i in range(6):
                store.upsert_node(_store_node(i, description=" ".join(
                    words[j % 7] for j in range(i, i + 4))))
            cfg = AlignmentConfig(embedder=HashedBagEmbedder(), theta=theta,
                                  top_k=20)
            batch = [_batch_probe(f"Probe {i}", " ".join(
                words[j % 7] for j in range(i, i + 4)) + (" extras" if i % 2 else ""))
                for i in range(6)]
            report = align_batch(batch, [], store, cfg, oracle)
            merged_names_by_theta.append(
                {d.candidate.name for d in report.decisions if d.outcome == "merged"})
        for lower, higher in zip(merged_names_by_theta, merged_names_by_theta[1:]):
            assert higher <= lower

    def test_merged_targets_share_the_candidate_type(self, store, cfg, oracle):
        store.upsert_node(_store_node(0, type_name="tool",
                                      description="shared words"))
        store.upsert_node(_store_node(1, type_name="group",
                                      description="shared words"))
        batch = [_batch_probe("Probe", "shared words", type_name="tool")]
        report = align_batch(batch, [], store, cfg, oracle)
        decision = report.decisions[0]
        assert decision.outcome == "merged"
        assert store.get_node(decision.target).type == "tool"

    def test_oracle_outage_defers_nodes_and_their_triples(self, store, cfg):
        class DownOracle:
            def adjudicate_match(self, *a, **kw):
                raise OracleUnavailable("down")

        store.upsert_node(_store_node(0, description="identical stuff"))
        node = _batch_probe("Probe", "identical stuff")
        lone = _batch_probe("Loner", "unrelated different words")
        triples = [Triple(src=node.id, relation="uses", dst=lone.id,
                          source="docs", timestamp=NOW)]
        report = align_batch([node, lone], triples, store, cfg, DownOracle())
        assert report.deferred == [node.id]
        assert report.new == 1
        assert report.triples_deferred == 1

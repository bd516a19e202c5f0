import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracekg.doc_pipeline import CandidateNode, CandidateTriple
from tracekg.filter_validate import (
    SanitizeRules,
    filter_nodes,
    is_serial_only_name,
    sanitize_text,
)
from tracekg.graph_store import GraphStore
from tracekg.ontology import default_registry

from conftest import make_node, make_triple


class TestSanitize:
    def test_escaped_backslash_collapses(self):
        assert sanitize_text("a\\\\b") == "a\\b"

    def test_double_dash_collapses(self):
        assert sanitize_text("x--y") == "x-y"

    def test_clean_string_is_a_fixed_point(self):
        assert sanitize_text("CVE-2021-26855 stays intact") == \
            "CVE-2021-26855 stays intact"

    def test_runs_collapse_fully_not_just_one_pass(self):
        assert sanitize_text("a----b") == "a-b"
        assert sanitize_text("a\\\\\\\\b") == "a\\b"

    def test_control_characters_removed(self):
        assert sanitize_text("a\x00b\x1fc") == "abc"

    @given(st.text(max_size=200))
    def test_idempotence_on_arbitrary_text(self, s):
        once = sanitize_text(s)
        assert sanitize_text(once) == once

    def test_rules_load_from_fixture_file(self, fixtures_dir):
        rules = SanitizeRules.load(fixtures_dir / "sanitize_rules.json")
        assert sanitize_text("a\\\\b--c", rules) == "a\\b-c"


class TestSerialOnly:
    @pytest.mark.parametrize("name", [
        "004217", "12345", "#4711", "ID-0092", "no 77", "REF:0001", "  42  ",
        "####", "",
    ])
    def test_serial_only(self, name):
        assert is_serial_only_name(name) is True

    @pytest.mark.parametrize("name", [
        "CVE-2021-26855", "CWE-79", "CAPEC-66", "T1190", "T1548.002",
        "M1051", "DS0015", "CAR-2021-02-002", "D3-PLA",
        "Exploit Public-Facing Application", "OrpaCrab", "log4shell 2021",
    ])
    def test_informative_names(self, name):
        assert is_serial_only_name(name) is False


def _cand(name, type_name="tool"):
    return CandidateNode(type=type_name, name=name, description="")


class TestFilterNodes:
    def test_isolated_serial_node_dropped(self):
        report = filter_nodes([_cand("00031")], [])
        assert report.kept == []
        assert report.dropped[0][1] == "isolated node with serial-only name"

    def test_isolated_informative_node_kept(self):
        report = filter_nodes([_cand("OrpaCrab")], [])
        assert [n.name for n in report.kept] == ["OrpaCrab"]

    def test_serial_node_with_accepted_triple_kept(self):
        serial = _cand("00031")
        other = _cand("OrpaCrab")
        triple = CandidateTriple(src=other, relation="uses", dst=serial,
                                 verdict="accepted")
        report = filter_nodes([serial, other], [triple])
        assert report.dropped == []

    def test_rejected_triples_do_not_protect_nodes(self):
        serial = _cand("00031")
        other = _cand("OrpaCrab")
        triple = CandidateTriple(src=other, relation="uses", dst=serial,
                                 verdict="rejected")
        report = filter_nodes([serial, other], [triple])
        assert [n.name for n, _ in report.dropped] == ["00031"]

    def test_store_edges_count_as_incidence(self):
        registry = default_registry()
        store = GraphStore(registry)
        tool = make_node("kb:tool:0099", "tool", "0099", "kb", description="x")
        group = make_node("kb:group:g", "group", "G Crew", "kb", description="y")
        store.upsert_node(tool)
        store.upsert_node(group)
        store.upsert_triple(make_triple(group.id, tool.id, relation="uses",
                                        source="kb"))
        # same name and type as the stored, non-isolated tool node
        report = filter_nodes([_cand("0099")], [], store=store)
        assert report.dropped == []

    def test_dropped_nodes_are_never_referenced_by_surviving_triples(self):
        a, b, serial = _cand("Alpha"), _cand("Beta"), _cand("991")
        triple = CandidateTriple(src=a, relation="uses", dst=b, verdict="accepted")
        report = filter_nodes([a, b, serial], [triple])
        dropped = set(id(n) for n in report.dropped_nodes())
        assert id(triple.src) not in dropped and id(triple.dst) not in dropped

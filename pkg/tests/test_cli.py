import json
import subprocess
import sys

import pytest

from tracekg.cli import main

from conftest import FIXTURES, REPO_ROOT


@pytest.fixture
def config_path(tmp_path):
    config = {
        "store_dir": str(tmp_path / "store"),
        "plugins": str(FIXTURES / "case_study" / "plugins.json"),
        "doc_dirs": [str(FIXTURES / "case_study" / "docs")],
        "align": {"theta": 0.9, "top_k": 20},
        "oracle": {
            "kind": "mock",
            "lexicon": str(FIXTURES / "security_lexicon.json"),
            "gazetteer": str(FIXTURES / "gazetteer.json"),
        },
        "delta_seconds": 3600,
        "now": "2025-01-02T00:00:00Z",
    }
    path = tmp_path / "trace.json"
    path.write_text(json.dumps(config, indent=2))
    return path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


class TestCycleAndQuery:
    def test_cycle_once_then_query_node_and_path(self, capsys, config_path):
        code, out = _run(capsys, "--config", config_path, "cycle", "--once")
        assert code == 0
        report = json.loads(out)
        assert report["decisions"] == {"new": 8, "merged": 2, "deferred": 0}

        code, out = _run(capsys, "--config", config_path, "query", "node",
                         "attack_kb:technique:T1548")
        assert code == 0
        assert json.loads(out)["name"] == "Abuse Elevation Control Mechanism"

        code, out = _run(capsys, "--config", config_path, "query", "path",
                         "apt_reports:vulnerability:CVE-2021-26855",
                         "attack_kb:mitigation:M1051", "--max-hops", "4")
        assert code == 0
        assert json.loads(out)["hops"] == 3

    def test_query_neighbors_with_relation(self, capsys, config_path):
        _run(capsys, "--config", config_path, "cycle", "--once")
        code, out = _run(capsys, "--config", config_path, "query", "neighbors",
                         "attack_kb:technique:T1548", "--relation", "mitigates",
                         "--direction", "in")
        assert code == 0
        got = json.loads(out)
        assert [item["node"]["name"] for item in got] == ["Update Software"]


class TestIngestAndExtract:
    def test_ingest_single_source(self, capsys, config_path):
        code, out = _run(capsys, "--config", config_path, "ingest",
                         "--source", "attack_kb", "--mode", "full")
        assert code == 0
        report = json.loads(out)
        assert report["records"] == 6
        assert report["nodes_inserted"] == 6
        assert report["triples_inserted"] == 4

    def test_unknown_source_fails_cleanly(self, capsys, config_path):
        code = main(["--config", str(config_path), "ingest", "--source", "nope"])
        assert code == 1

    def test_extract_writes_extraction_files(self, capsys, config_path, tmp_path):
        out_dir = tmp_path / "extractions"
        code, out = _run(capsys, "--config", config_path, "extract",
                         "--docs", FIXTURES / "case_study" / "docs",
                         "--out", out_dir)
        assert code == 0
        summary = json.loads(out)
        screened = [s for s in summary if "screened_out" in s]
        assert [s["doc"] for s in screened] == ["sorting_networks"]
        assert (out_dir / "apt_hafnium.json").exists()

    def test_align_batch_file(self, capsys, config_path, tmp_path):
        out_dir = tmp_path / "extractions"
        _run(capsys, "--config", config_path, "ingest",
             "--source", "attack_kb", "--mode", "full")
        _run(capsys, "--config", config_path, "extract",
             "--docs", FIXTURES / "case_study" / "docs", "--out", out_dir)
        code, out = _run(capsys, "--config", config_path, "align",
                         "--batch", out_dir / "apt_hafnium.json",
                         "--now", "2025-01-02T00:00:00Z")
        assert code == 0
        report = json.loads(out)
        assert report["merged"] == 2 and report["new"] == 5
        assert (out_dir / "apt_hafnium.align.json").exists()


class TestMetricsCommands:
    def test_coverage_after_cycle(self, capsys, config_path):
        _run(capsys, "--config", config_path, "cycle", "--once")
        code, out = _run(capsys, "--config", config_path, "metrics", "coverage")
        assert code == 0
        report = json.loads(out)
        assert report["nodes"] == 14 and report["isolated"] == 1

    def test_density_table_text_output(self, capsys, config_path):
        _run(capsys, "--config", config_path, "cycle", "--once")
        code, out = _run(capsys, "--config", config_path, "metrics", "density")
        assert code == 0
        assert out.splitlines()[0].startswith("Relationship")
        assert "uses" in out

    def test_f1_harness_from_files(self, capsys, config_path):
        code, out = _run(capsys, "--config", config_path, "metrics", "f1",
                         "--gold", FIXTURES / "eval" / "gold.json",
                         "--pred", FIXTURES / "eval" / "pred.json")
        assert code == 0
        result = json.loads(out)
        assert result["overall"]["micro_f1"] == pytest.approx(0.8)
        assert set(result["per_genre"]) == {"apt_report", "paper"}


class TestSnapshotCommands:
    def test_export_then_import_round_trip(self, capsys, config_path, tmp_path):
        _run(capsys, "--config", config_path, "cycle", "--once")
        code, out = _run(capsys, "--config", config_path, "export",
                         "--path", tmp_path / "snap")
        assert code == 0
        manifest = json.loads(out)
        assert manifest["nodes"] == 14

        code, out = _run(capsys, "--config", config_path,
                         "--store", tmp_path / "store2",
                         "import", "--path", tmp_path / "snap")
        assert code == 0
        assert json.loads(out)["nodes"] == 14


class TestEntryPoint:
    def test_console_script_help(self):
        result = subprocess.run([sys.executable, "-m", "tracekg.cli", "--help"],
                                capture_output=True, text=True)
        assert result.returncode == 0
        assert "ingest" in result.stdout and "serve" in result.stdout

import json
from datetime import datetime, timezone
from pathlib import Path

import pytest

from tracekg.graph_store import GraphStore, Node, Triple
from tracekg.ontology import default_registry
from tracekg.oracle_gateway import MockOracle

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"

NOW = datetime(2025, 1, 2, tzinfo=timezone.utc)


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture
def store(registry):
    return GraphStore(registry)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def mock_oracle():
    return MockOracle.from_fixture_files(
        lexicon_path=FIXTURES / "security_lexicon.json",
        gazetteer_path=FIXTURES / "gazetteer.json",
    )


def make_node(node_id="nvd:vuln:CVE-2021-26855", type_name="vuln",
              name="CVE-2021-26855", source="nvd", timestamp=NOW,
              description="ProxyLogon server-side request forgery", **properties):
    return Node(id=node_id, type=type_name, name=name, source=source,
                timestamp=timestamp, description=description,
                properties=properties)


def make_triple(src, dst, relation="belong_to", source="nvd", timestamp=NOW,
                provenance=None):
    return Triple(src=src, relation=relation, dst=dst, source=source,
                  timestamp=timestamp, provenance=provenance)


def case_study_plugins(tmp_path=None):
    """Plugin descriptors; locators resolve against the plugins file."""
    from tracekg.structured_ingest import load_plugins

    registry = default_registry()
    loaded = load_plugins(FIXTURES / "case_study" / "plugins.json", registry)
    return list(loaded.plugins.values())

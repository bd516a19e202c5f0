"""tracekg: a continuously updated cybersecurity knowledge graph engine.

Structured threat feeds and unstructured documents (APT reports, repair
notices, papers) flow through ingestion, extraction, filtering, and
entity alignment into a typed property graph that can be queried over
HTTP or from the ``trace`` command line tool.
"""

__version__ = "0.1.0"

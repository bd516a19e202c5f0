"""Unstructured acquisition: cleanse documents, screen papers for
relevance, extract candidate nodes (regex plus oracle), combine them into
candidate triples under the genre schema, and validate each triple
against the source text.

Non-paper genres (APT reports, repair notices) are admitted without
screening; papers pass only if the relevance classifier accepts their
title and abstract. Extraction is two-step: candidate nodes first, then
schema-driven combination into triples that the oracle confirms or
rejects against the text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import ContractError, DocumentError, OracleUnavailable
from .util import canon_dumps, format_timestamp

GENRES = ("paper", "apt_report", "repair_notice")

# Standardized identifier grammars; matched case-sensitively so that
# near-miss strings (lowercase, wrong digit counts) never hit.
IDENTIFIER_PATTERNS = (
    ("cve", re.compile(r"\bCVE-\d{4}-\d{4,}\b"), "vulnerability"),
    ("cwe", re.compile(r"\bCWE-\d+\b"), "cwe"),
    ("capec", re.compile(r"\bCAPEC-\d+\b"), "attack_pattern"),
    ("attack_technique", re.compile(r"\bT\d{4}(?:\.\d{3})?\b"), "technique"),
    ("attack_mitigation", re.compile(r"\bM\d{4}\b"), "mitigation"),
    ("attack_data_source", re.compile(r"\bDS\d{4}\b"), "data_model"),
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9\"'(])")
_CONTROL_CHARS = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")


@dataclass
class Document:
    """One unstructured text moving through the extraction pipeline."""

    id: str
    genre: str
    title: str
    body: str
    abstract: str = ""
    published: datetime | None = None

    def __post_init__(self):
        if self.genre not in GENRES:
            raise DocumentError(f"unknown genre: {self.genre!r}")


@dataclass
class CandidateNode:
    """An extraction hit: entity type, surface name, supporting span."""

    type: str
    name: str
    description: str = ""
    extraction_method: str = "oracle"  # "regex" | "oracle"
    confidence: float = 0.5
    properties: dict = field(default_factory=dict)  # raw names, unified later

    def __post_init__(self):
        if not self.name:
            raise ContractError("candidate nodes need a non-empty name")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence out of range: {self.confidence}")

    def dedup_key(self) -> tuple:
        return (self.type, self.name.casefold())


@dataclass
class CandidateTriple:
    """A schema-compatible node pair awaiting the oracle's verdict."""

    src: CandidateNode
    relation: str
    dst: CandidateNode
    verdict: str = "pending"
    provenance: str | None = None

    def decide(self, verdict: str, provenance: str | None = None) -> None:
        if self.verdict != "pending":
            raise ContractError(f"verdict already {self.verdict}, cannot change")
        if verdict not in ("accepted", "rejected"):
            raise ContractError(f"verdict must be accepted|rejected, got {verdict!r}")
        self.verdict = verdict
        if verdict == "accepted":
            self.provenance = provenance


@dataclass(frozen=True)
class GenreSchema:
    """Entity types and (src, relation, dst) patterns allowed per genre."""

    genre: str
    entity_types: frozenset
    relation_patterns: frozenset  # of (src-type, relation, dst-type)

    def sorted_patterns(self) -> list:
        return sorted(self.relation_patterns)


def default_genre_schemas() -> dict:
    """The shipped per-genre extraction schemas.

    APT reports carry the fixed five-type set. Paper relations stay
    within the six semantic relations; repair notices reuse affects and
    solves.
    """
    return {
        "apt_report": GenreSchema(
            genre="apt_report",
            entity_types=frozenset({"vulnerability", "tool", "technique", "group", "asset"}),
            relation_patterns=frozenset({
                ("group", "uses", "technique"),
                ("group", "uses", "tool"),
                ("group", "uses", "vulnerability"),
                ("technique", "causes", "vulnerability"),
                ("tool", "causes", "vulnerability"),
                ("vulnerability", "reflects", "asset"),
            }),
        ),
        "paper": GenreSchema(
            genre="paper",
            entity_types=frozenset({"method", "tool", "technique", "asset",
                                    "vulnerability", "mitigation"}),
            relation_patterns=frozenset({
                ("method", "uses", "tool"),
                ("technique", "uses", "method"),
                ("technique", "uses", "tool"),
                ("method", "discovers", "vulnerability"),
                ("technique", "discovers", "vulnerability"),
                ("technique", "causes", "vulnerability"),
                ("vulnerability", "reflects", "asset"),
                ("mitigation", "mitigates", "technique"),
                ("mitigation", "solves", "vulnerability"),
            }),
        ),
        "repair_notice": GenreSchema(
            genre="repair_notice",
            entity_types=frozenset({"vulnerability", "product", "version", "mitigation"}),
            relation_patterns=frozenset({
                ("vulnerability", "affects", "product"),
                ("vulnerability", "affects", "version"),
                ("mitigation", "solves", "vulnerability"),
            }),
        ),
    }


def split_sentences(text: str) -> list:
    """Period/question/exclamation followed by whitespace and a capital."""
    parts = [p.strip() for p in _SENTENCE_SPLIT.split(text)]
    return [p for p in parts if p]


def supporting_span(text: str, name: str) -> str:
    """First sentence containing the name (case-insensitive), else ''."""
    needle = name.casefold()
    for sentence in split_sentences(text):
        if needle in sentence.casefold():
            return sentence
    return ""


# -- pipeline stages ---------------------------------------------------------

def convert_and_clean(raw: bytes | str, genre: str, doc_id: str,
                      title: str | None = None,
                      published: datetime | None = None) -> Document:
    """Decode, normalize newlines, strip control characters, and split
    title/abstract for papers. Code blocks survive verbatim: nothing
    beyond newline normalization touches line content."""
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _CONTROL_CHARS.sub("", text)
    body = text.strip()
    if not body:
        raise DocumentError(f"document {doc_id!r} is empty after cleansing")
    abstract = ""
    if genre == "paper":
        if title is None:
            title = _first_heading(body)
        abstract = _labeled_abstract(body)
    if title is None:
        title = _first_heading(body)
    return Document(id=doc_id, genre=genre, title=title, body=body,
                    abstract=abstract, published=published)


def _first_heading(body: str) -> str:
    for line in body.splitlines():
        line = line.strip().lstrip("#").strip()
        if line:
            return line
    return ""


_ABSTRACT_LABEL = re.compile(r"^\s*#*\s*abstract\b[:.\-\s]*", re.IGNORECASE)


def _labeled_abstract(body: str) -> str:
    lines = body.splitlines()
    for i, line in enumerate(lines):
        m = _ABSTRACT_LABEL.match(line)
        if not m:
            continue
        collected = []
        remainder = line[m.end():].strip()
        if remainder:
            collected.append(remainder)
        for follow in lines[i + 1:]:
            if not follow.strip():
                if collected:
                    break
                continue
            collected.append(follow.strip())
        return " ".join(collected)
    return ""


@dataclass
class ScreenDecision:
    """Relevance verdict plus the classifier's recorded rationale."""

    passed: bool
    rationale: str


def screen_relevance(d: Document, oracle) -> ScreenDecision:
    """Non-papers always pass; papers go through the relevance classifier.

    Raises OracleUnavailable so the caller can defer (never drop) the
    document when the backend is down.
    """
    if d.genre != "paper":
        return ScreenDecision(True, f"genre {d.genre} is admitted unconditionally")
    relevant, rationale = oracle.classify_relevance(d.title, d.abstract)
    return ScreenDecision(relevant, rationale)


@dataclass
class ExtractedNodes:
    nodes: list
    partial: bool = False  # oracle failed; regex-only result


def extract_nodes(d: Document, schema: GenreSchema, oracle,
                  repo=None, retrieval_k: int = 5) -> ExtractedNodes:
    """Union of regex identifier hits (confidence 1.0) and oracle
    extractions, gated to the genre schema and deduplicated on
    (type, case-folded name) with regex winning."""
    text = f"{d.title}\n{d.body}" if d.title else d.body
    found: dict[tuple, CandidateNode] = {}
    for _, pattern, type_name in IDENTIFIER_PATTERNS:
        if type_name not in schema.entity_types:
            continue
        for match in pattern.finditer(text):
            node = CandidateNode(type=type_name, name=match.group(0),
                                 description=supporting_span(text, match.group(0)),
                                 extraction_method="regex", confidence=1.0)
            found.setdefault(node.dedup_key(), node)
    partial = False
    try:
        retrieved = []
        if repo is not None and len(repo) > 0:
            retrieved = repo.retrieve(text[:2000], retrieval_k)
        for node in oracle.extract_entities(text, schema, retrieved=retrieved):
            if node.type not in schema.entity_types:
                continue
            found.setdefault(node.dedup_key(), node)
    except OracleUnavailable:
        partial = True
    return ExtractedNodes(nodes=list(found.values()), partial=partial)


def combine_triples(nodes: list, schema: GenreSchema) -> list:
    """Cartesian pairing restricted to the schema's relation patterns,
    self-pairs excluded, in deterministic (pattern, src, dst) order."""
    by_type: dict[str, list] = {}
    for node in nodes:
        by_type.setdefault(node.type, []).append(node)
    out = []
    for src_type, relation, dst_type in schema.sorted_patterns():
        for src in by_type.get(src_type, ()):
            for dst in by_type.get(dst_type, ()):
                if src is dst:
                    continue
                out.append(CandidateTriple(src=src, relation=relation, dst=dst))
    return out


@dataclass
class ValidatedTriples:
    candidates: list
    partial: bool = False  # some verdicts still pending after oracle failures


def validate_triples(cands: list, d: Document, oracle) -> ValidatedTriples:
    """Ask the oracle whether each candidate relation exists in the text.

    Accepted triples carry the document id as provenance; candidates the
    oracle could not judge stay pending and flag the batch as partial.
    """
    partial = False
    for cand in cands:
        if cand.verdict != "pending":
            raise ContractError("validate_triples expects pending candidates")
        try:
            ok = oracle.judge_triple(cand, d.body)
        except OracleUnavailable:
            partial = True
            continue
        cand.decide("accepted" if ok else "rejected", provenance=d.id)
    return ValidatedTriples(candidates=cands, partial=partial)


# -- whole-document runs -------------------------------------------------------

@dataclass
class ExtractionRecord:
    """Everything one document contributed: nodes and judged triples."""

    doc: Document
    nodes: list = field(default_factory=list)
    triples: list = field(default_factory=list)
    partial: bool = False

    def accepted_triples(self) -> list:
        return [t for t in self.triples if t.verdict == "accepted"]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc.id,
            "genre": self.doc.genre,
            "published": format_timestamp(self.doc.published) if self.doc.published else None,
            "partial": self.partial,
            "nodes": [
                {
                    "type": n.type, "name": n.name, "description": n.description,
                    "extraction_method": n.extraction_method, "confidence": n.confidence,
                }
                for n in self.nodes
            ],
            "triples": [
                {
                    "src": {"type": t.src.type, "name": t.src.name},
                    "relation": t.relation,
                    "dst": {"type": t.dst.type, "name": t.dst.name},
                    "verdict": t.verdict,
                    "provenance": t.provenance,
                }
                for t in self.triples
            ],
        }


def run_extraction(d: Document, schema: GenreSchema, oracle,
                   repo=None, retrieval_k: int = 5) -> ExtractionRecord:
    """Extract, combine, and validate for one screened document."""
    extracted = extract_nodes(d, schema, oracle, repo=repo, retrieval_k=retrieval_k)
    cands = combine_triples(extracted.nodes, schema)
    validated = validate_triples(cands, d, oracle)
    if repo is not None:
        for node in extracted.nodes:
            repo.add(node.description or node.name,
                     {"kind": "node", "type": node.type, "name": node.name})
    return ExtractionRecord(
        doc=d, nodes=extracted.nodes, triples=validated.candidates,
        partial=extracted.partial or validated.partial,
    )


def write_extraction(record: ExtractionRecord, directory: Path | str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{record.doc.id}.json"
    path.write_text(canon_dumps(record.to_dict()) + "\n", encoding="utf-8")
    return path


# -- document loading ----------------------------------------------------------

def load_documents(directory: Path | str) -> list:
    """Read a fixture directory of documents.

    Two layouts per document id: ``<id>.txt`` with a ``<id>.json``
    sidecar carrying {id, genre, title, published}, or a single
    ``<id>.json`` with a ``body`` field inline.
    """
    from .util import parse_timestamp

    directory = Path(directory)
    docs = []
    for path in sorted(directory.glob("*.txt")):
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
        docs.append(convert_and_clean(
            path.read_bytes(),
            genre=meta.get("genre", "paper"),
            doc_id=meta.get("id", path.stem),
            title=meta.get("title"),
            published=parse_timestamp(meta["published"]) if meta.get("published") else None,
        ))
    for path in sorted(directory.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        if "body" not in data:
            continue  # sidecar for a .txt document
        docs.append(convert_and_clean(
            data["body"],
            genre=data.get("genre", "paper"),
            doc_id=data.get("id", path.stem),
            title=data.get("title"),
            published=parse_timestamp(data["published"]) if data.get("published") else None,
        ))
    docs.sort(key=lambda d: d.id)
    return docs

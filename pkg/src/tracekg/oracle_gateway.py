"""Uniform interface to text intelligence: embeddings, relevance
classification, few-shot entity extraction, triple judgment, and
zero-shot alignment adjudication.

Two implementations share the interface. ``MockOracle`` is fully
deterministic (hashed bag-of-tokens embeddings, lexicon classifier,
gazetteer extractor, sentence co-occurrence judge, similarity-band
adjudicator) so the whole pipeline runs reproducibly offline.
``RemoteOracle`` talks JSON-over-HTTP to a chat/embedding service with
retries, a content-addressed response cache, and a call log; replaying
a warm cache reproduces pipeline output exactly.
"""

from __future__ import annotations

import json
import math
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .doc_pipeline import CandidateNode, split_sentences, supporting_span
from .errors import (
    ContractError,
    ExtractionFormatError,
    OracleError,
    OracleUnavailable,
)
from .graph_store import native_id_of
from .util import canon_dumps, sha256_hex


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple
    dim: int

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ContractError(f"vector length {len(self.values)} != dim {self.dim}")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise ContractError(f"dimension mismatch: {a.dim} != {b.dim}")
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine is undefined for zero vectors")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot / (na * nb)))


class HashedBagEmbedder:
    """Deterministic bag-of-tokens embedding: each token is hashed into a
    fixed bucket (sha256, fixed seed), counts accumulate. Non-negative by
    construction, so disjoint token sets give cosine 0 unless buckets
    collide."""

    def __init__(self, dim: int = 256, seed: int = 1315423911):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, EmbeddingVector] = {}

    def _bucket(self, token: str) -> int:
        return int(sha256_hex(f"{self.seed}:{token}")[:12], 16) % self.dim

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise OracleError("cannot embed empty text")
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            tokens = [text.strip().lower()]
        values = [0.0] * self.dim
        for token in tokens:
            values[self._bucket(token)] += 1.0
        vector = EmbeddingVector(tuple(values), self.dim)
        self._cache[text] = vector
        return vector


@dataclass
class RepositoryEntry:
    text: str
    vector: EmbeddingVector
    payload: dict


class RetrievalRepository:
    """Append-only reference store of previously extracted nodes/triples;
    feeds retrieval-augmented prompts."""

    def __init__(self, embedder):
        self.embedder = embedder
        self.entries: list[RepositoryEntry] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def add(self, text: str, payload: dict) -> None:
        if not text or not text.strip():
            return
        vector = self.embedder.embed(text)
        with self._lock:
            self.entries.append(RepositoryEntry(text, vector, payload))

    def retrieve(self, query_text: str, k: int) -> list:
        """Top-k entries by cosine, ties by insertion order; fewer than k
        when the repository is smaller."""
        if k < 1:
            raise ContractError("k must be >= 1")
        if not self.entries:
            return []
        query = self.embedder.embed(query_text)
        scored = [(cosine(query, e.vector), i) for i, e in enumerate(self.entries)]
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        return [(self.entries[i], sim) for sim, i in scored[:k]]


def retrieve_similar(repo: RetrievalRepository, query_text: str, k: int) -> list:
    return repo.retrieve(query_text, k)


@dataclass
class PromptTemplate:
    """Rendered prompt parts for one oracle task."""

    task: str  # relevance | extraction | triple_judgment | alignment
    system_text: str
    exemplars: list = field(default_factory=list)  # (input, output) pairs
    output_grammar: dict = field(default_factory=dict)  # {"required": [...]}

    @classmethod
    def from_dict(cls, d: dict) -> "PromptTemplate":
        return cls(task=d["task"], system_text=d.get("system_text", ""),
                   exemplars=[tuple(x) for x in d.get("exemplars", [])],
                   output_grammar=d.get("output_grammar", {}))

    def render(self, payload: str, retrieved: list | None = None) -> str:
        parts = [self.system_text]
        for given, expected in self.exemplars:
            parts.append(f"Input: {given}\nOutput: {expected}")
        for entry, _sim in retrieved or []:
            parts.append(f"Reference: {canon_dumps(entry.payload)}")
        parts.append(f"Input: {payload}\nOutput:")
        return "\n\n".join(parts)


def load_templates(directory: Path | str) -> dict:
    templates = {}
    for path in sorted(Path(directory).glob("*.json")):
        t = PromptTemplate.from_dict(json.loads(path.read_text(encoding="utf-8")))
        templates[t.task] = t
    return templates


def _conforms(entry, grammar: dict) -> bool:
    if not isinstance(entry, dict):
        return False
    return all(k in entry for k in grammar.get("required", []))


# -- deterministic mock stack --------------------------------------------------

DEFAULT_LEXICON = (
    "vulnerability", "vulnerabilities", "exploit", "exploitation", "malware",
    "attack", "attacker", "backdoor", "ransomware", "phishing", "zero-day",
    "botnet", "intrusion", "threat", "security", "mitigation", "penetration",
    "injection", "privilege escalation", "denial of service",
)


class MockOracle:
    """Pure-function oracle: same inputs and configuration, same outputs."""

    def __init__(self, lexicon=None, gazetteer=None, dim: int = 256,
                 seed: int = 1315423911):
        self.lexicon = tuple(lexicon) if lexicon is not None else DEFAULT_LEXICON
        self.gazetteer = dict(gazetteer or {})  # surface name -> entity type
        self.embedder = HashedBagEmbedder(dim=dim, seed=seed)

    @classmethod
    def from_fixture_files(cls, lexicon_path=None, gazetteer_path=None, **kw):
        lexicon = None
        gazetteer = None
        if lexicon_path:
            lexicon = json.loads(Path(lexicon_path).read_text(encoding="utf-8"))
        if gazetteer_path:
            gazetteer = json.loads(Path(gazetteer_path).read_text(encoding="utf-8"))
        return cls(lexicon=lexicon, gazetteer=gazetteer, **kw)

    # embeddings

    def embed(self, text: str) -> EmbeddingVector:
        return self.embedder.embed(text)

    # relevance

    def classify_relevance(self, title: str, abstract: str = "") -> tuple:
        if not title:
            raise ContractError("classify_relevance needs a non-empty title")
        text = f"{title}\n{abstract}"
        for term in self.lexicon:
            if re.search(rf"\b{re.escape(term)}\b", text, re.IGNORECASE):
                return True, f"matched security term: {term!r}"
        return False, "no security term matched"

    # extraction

    def extract_entities(self, text: str, schema, exemplars=None,
                         retrieved=None) -> list:
        """Gazetteer matcher: every configured surface form found in the
        text (word-boundary, case-insensitive) becomes a candidate of its
        configured type, schema permitting."""
        if not text.strip():
            return []
        nodes = []
        seen = set()
        for name in sorted(self.gazetteer):
            type_name = self.gazetteer[name]
            if type_name not in schema.entity_types:
                continue
            if not re.search(rf"\b{re.escape(name)}\b", text, re.IGNORECASE):
                continue
            key = (type_name, name.casefold())
            if key in seen:
                continue
            seen.add(key)
            nodes.append(CandidateNode(
                type=type_name, name=name,
                description=supporting_span(text, name),
                extraction_method="oracle", confidence=0.5))
        return nodes

    # triple judgment

    def judge_triple(self, candidate, evidence_text: str) -> bool:
        """True iff both endpoint names co-occur within one sentence."""
        if candidate.verdict != "pending":
            raise ContractError("judge_triple expects a pending candidate")
        if not evidence_text.strip():
            return False
        src = candidate.src.name.casefold()
        dst = candidate.dst.name.casefold()
        for sentence in split_sentences(evidence_text):
            folded = sentence.casefold()
            if src in folded and dst in folded:
                return True
        return False

    # alignment adjudication

    def adjudicate_match(self, new_node, candidates: list, theta: float) -> str | None:
        """Pick the highest-similarity candidate iff it clears theta + 0.05
        or shares the new node's native id; otherwise report no match."""
        if not candidates:
            raise ContractError("adjudicate_match requires at least one candidate")
        for node, sim in candidates:
            if sim < theta:
                raise ContractError("all candidates must be at or above theta")
            if node.type != new_node.type:
                raise ContractError("candidates must share the new node's type")
        best_node, best_sim = max(candidates, key=lambda pair: (pair[1], pair[0].id))
        new_native = native_id_of(new_node.id).casefold()
        if best_sim >= theta + 0.05:
            return best_node.id
        if native_id_of(best_node.id).casefold() == new_native:
            return best_node.id
        return None


# -- remote client ---------------------------------------------------------------

@dataclass
class RemoteConfig:
    endpoint: str
    model: str
    api_key_env: str = "TRACE_API_KEY"
    embed_model: str = ""
    cache_dir: str = ".oracle_cache"
    call_log: str = "oracle_calls.jsonl"
    max_attempts: int = 3
    backoff_base: float = 0.25
    timeout: float = 30.0

    @classmethod
    def from_dict(cls, d: dict) -> "RemoteConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class RemoteOracle:
    """JSON-over-HTTP oracle client with caching, retries, and a call log.

    The response cache is keyed by (task, prompt content hash); with a
    warm cache a run never touches the network, which is the unit of
    reproducibility for remote pipelines.
    """

    def __init__(self, config: RemoteConfig, templates: dict, session=None):
        import requests

        self.config = config
        self.templates = templates
        self.session = session or requests.Session()
        self.cache_dir = Path(config.cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.call_log = Path(config.call_log)
        self.dropped_entries = 0
        self.adjudication_fallbacks = 0
        self._log_lock = threading.Lock()

    # transport

    def _api_key(self) -> str:
        import os

        return os.environ.get(self.config.api_key_env, "")

    def _cache_path(self, task: str, prompt_hash: str) -> Path:
        return self.cache_dir / f"{task}_{prompt_hash}.json"

    def _post(self, route: str, payload: dict, task: str) -> dict:
        import requests

        prompt_hash = sha256_hex(canon_dumps(payload))
        cache_path = self._cache_path(task, prompt_hash)
        if cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))
        url = self.config.endpoint.rstrip("/") + route
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error = None
        for attempt in range(self.config.max_attempts):
            started = time.monotonic()
            try:
                response = self.session.post(url, json=payload, headers=headers,
                                             timeout=self.config.timeout)
                response.raise_for_status()
                body = response.json()
                elapsed_ms = int((time.monotonic() - started) * 1000)
                self._log_call(task, prompt_hash, sha256_hex(canon_dumps(body)), elapsed_ms)
                cache_path.write_text(json.dumps(body, sort_keys=True), encoding="utf-8")
                return body
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                time.sleep(self.config.backoff_base * (2 ** attempt))
        raise OracleUnavailable(
            f"remote oracle failed after {self.config.max_attempts} attempts: {last_error}")

    def _log_call(self, task: str, prompt_sha256: str, response_sha256: str,
                  ms: int) -> None:
        entry = {"task": task, "prompt_sha256": prompt_sha256,
                 "response_sha256": response_sha256, "ms": ms}
        with self._log_lock:
            with self.call_log.open("a", encoding="utf-8") as fh:
                fh.write(canon_dumps(entry) + "\n")

    def _chat(self, task: str, payload_text: str, retrieved=None) -> str:
        template = self.templates.get(task)
        if template is None:
            raise OracleError(f"no prompt template for task {task!r}")
        prompt = template.render(payload_text, retrieved=retrieved)
        body = self._post("/chat", {"model": self.config.model, "task": task,
                                    "prompt": prompt}, task)
        content = body.get("content")
        if not isinstance(content, str):
            raise ExtractionFormatError(f"chat response missing content for {task}",
                                        raw=body)
        return content

    # interface

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise OracleError("cannot embed empty text")
        model = self.config.embed_model or self.config.model
        body = self._post("/embed", {"model": model, "input": text}, "embedding")
        values = body.get("embedding")
        if not isinstance(values, list) or not values:
            raise ExtractionFormatError("embed response missing embedding", raw=body)
        return EmbeddingVector(tuple(float(v) for v in values), len(values))

    def classify_relevance(self, title: str, abstract: str = "") -> tuple:
        if not title:
            raise ContractError("classify_relevance needs a non-empty title")
        content = self._chat("relevance", canon_dumps({"title": title,
                                                       "abstract": abstract}))
        try:
            parsed = json.loads(content)
            return bool(parsed["relevant"]), str(parsed.get("rationale", ""))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ExtractionFormatError(f"unparseable relevance output: {exc}",
                                        raw=content) from exc

    def extract_entities(self, text: str, schema, exemplars=None,
                         retrieved=None) -> list:
        if not text.strip():
            return []
        payload = canon_dumps({
            "genre": schema.genre,
            "entity_types": sorted(schema.entity_types),
            "text": text,
        })
        content = self._chat("extraction", payload, retrieved=retrieved)
        try:
            entries = json.loads(content)
        except json.JSONDecodeError as exc:
            raise ExtractionFormatError(f"unparseable extraction output: {exc}",
                                        raw=content) from exc
        if not isinstance(entries, list):
            raise ExtractionFormatError("extraction output is not a list", raw=content)
        grammar = self.templates["extraction"].output_grammar or {"required": ["type", "name"]}
        nodes = []
        for entry in entries:
            if not _conforms(entry, grammar) or entry.get("type") not in schema.entity_types:
                self.dropped_entries += 1
                continue
            confidence = entry.get("confidence")
            nodes.append(CandidateNode(
                type=entry["type"], name=str(entry["name"]),
                description=str(entry.get("description", "")),
                extraction_method="oracle",
                confidence=float(confidence) if confidence is not None else 0.5))
        return nodes

    def judge_triple(self, candidate, evidence_text: str) -> bool:
        if candidate.verdict != "pending":
            raise ContractError("judge_triple expects a pending candidate")
        payload = canon_dumps({
            "src": {"type": candidate.src.type, "name": candidate.src.name},
            "relation": candidate.relation,
            "dst": {"type": candidate.dst.type, "name": candidate.dst.name},
            "evidence": evidence_text,
        })
        content = self._chat("triple_judgment", payload)
        try:
            return bool(json.loads(content)["holds"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ExtractionFormatError(f"unparseable judgment output: {exc}",
                                        raw=content) from exc

    def adjudicate_match(self, new_node, candidates: list, theta: float) -> str | None:
        if not candidates:
            raise ContractError("adjudicate_match requires at least one candidate")
        payload = canon_dumps({
            "node": {"id": new_node.id, "type": new_node.type,
                     "name": new_node.name, "description": new_node.description},
            "candidates": [
                {"id": node.id, "name": node.name, "description": node.description,
                 "similarity": sim}
                for node, sim in candidates
            ],
            "theta": theta,
        })
        content = self._chat("alignment", payload)
        try:
            parsed = json.loads(content)
            match = parsed.get("match")
            return str(match) if match else None
        except (json.JSONDecodeError, AttributeError):
            # Unparseable adjudication: fall back to the highest-similarity
            # candidate and record that we did.
            self.adjudication_fallbacks += 1
            best_node, _ = max(candidates, key=lambda pair: (pair[1], pair[0].id))
            return best_node.id

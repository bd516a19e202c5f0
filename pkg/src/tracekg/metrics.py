"""Quantitative characterization of the graph and the pipeline: coverage
counts, degree-class statistics, relation density (unique edges over the
src-type x dst-type product), and macro/micro F1 evaluation harnesses
for extraction and alignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, TraceError
from .graph_store import DegreeClass, GraphStore


# -- density -------------------------------------------------------------------

@dataclass
class DensityRow:
    """One relation's density: unique (src, dst) pairs over the exact
    big-integer product of the endpoint type populations."""

    relation: str
    src_type: str
    dst_type: str
    n_src: int
    n_dst: int
    expected_edges: int
    unique_edges: int
    ep_ratio: float

    def label(self) -> str:
        return f"{self.src_type} {self.relation} {self.dst_type}"


def make_density_row(relation: str, src_type: str, dst_type: str,
                     n_src: int, n_dst: int, unique_edges: int) -> DensityRow:
    expected = n_src * n_dst  # exact int product, no float intermediate
    ratio = unique_edges / expected if expected else 0.0
    return DensityRow(relation=relation, src_type=src_type, dst_type=dst_type,
                      n_src=n_src, n_dst=n_dst, expected_edges=expected,
                      unique_edges=unique_edges, ep_ratio=ratio)


def density_table(store: GraphStore, pairs: list) -> list:
    """Density rows for (src_type, relation, dst_type) specs against the
    live store; unique edges count distinct (src, dst) node pairs."""
    rows = []
    for src_type, relation, dst_type in pairs:
        if relation not in store.registry.relation_types:
            raise ContractError(f"unknown relation: {relation!r}")
        for type_name in (src_type, dst_type):
            if type_name not in store.registry.entity_types:
                raise ContractError(f"unknown type: {type_name!r}")
        n_src = sum(1 for _ in store.nodes_by_type(src_type))
        n_dst = sum(1 for _ in store.nodes_by_type(dst_type))
        pairs_seen = set()
        for triple in store.triples_by_relation(relation):
            if store.node_type(triple.src) == src_type \
                    and store.node_type(triple.dst) == dst_type:
                pairs_seen.add((triple.src, triple.dst))
        rows.append(make_density_row(relation, src_type, dst_type,
                                     n_src, n_dst, len(pairs_seen)))
    return rows


def row_inconsistencies(row: DensityRow, printed_expected_edges: float | None = None,
                        printed_ep: float | None = None,
                        rel_tol: float = 0.005) -> list:
    """Flags for rows whose published numbers disagree with the formula."""
    flags = []
    if printed_expected_edges is not None:
        if abs(printed_expected_edges - row.expected_edges) > rel_tol * row.expected_edges:
            flags.append(
                f"printed expected-edge count {printed_expected_edges:.3G} != "
                f"computed {row.expected_edges}")
    if printed_ep is not None and row.ep_ratio > 0:
        if abs(printed_ep - row.ep_ratio) > rel_tol * row.ep_ratio:
            flags.append(
                f"printed E/P {printed_ep:.3G} != computed {row.ep_ratio:.3G}")
    return flags


def format_scientific(x: float) -> str:
    return f"{x:.2E}"


def format_count(n: int) -> str:
    return f"{n:,}" if n < 10_000_000 else format_scientific(float(n))


def format_density_table(rows: list) -> str:
    headers = ("Relationship", "#Src", "#Dst", "#Edges", "Edges", "E/P")
    body = [
        (row.label(), format_count(row.n_src), format_count(row.n_dst),
         format_count(row.expected_edges), format_count(row.unique_edges),
         format_scientific(row.ep_ratio))
        for row in rows
    ]
    widths = [max(len(headers[i]), *(len(line[i]) for line in body)) if body
              else len(headers[i]) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for line in body:
        lines.append("  ".join(cell.rjust(widths[i]) if i else cell.ljust(widths[i])
                               for i, cell in enumerate(line)))
    return "\n".join(lines)


# -- F1 ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    def f1(self) -> float:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else 0.0

    def empty(self) -> bool:
        return self.tp == self.fp == self.fn == 0


def macro_f1(confusion: dict) -> float:
    """Mean of per-type F1 scores. Types absent from both gold and
    predictions contribute nothing and are excluded from the mean."""
    if not confusion:
        raise ContractError("macro_f1 needs at least one type")
    active = [c for c in confusion.values() if not c.empty()]
    if not active:
        return 0.0  # degenerate: nothing was annotated or predicted
    return sum(c.f1() for c in active) / len(active)


def micro_f1(confusion: dict) -> float:
    """Instance-pooled F1 over all types."""
    if not confusion:
        raise ContractError("micro_f1 needs at least one type")
    tp = sum(c.tp for c in confusion.values())
    fp_fn = sum(c.fp + c.fn for c in confusion.values())
    denominator = 2 * tp + fp_fn
    return 2 * tp / denominator if denominator else 0.0


# -- extraction evaluation ---------------------------------------------------------

def eval_extraction(gold: dict, predicted: dict):
    """Score predicted entity sets against gold annotations.

    Both maps go from document id to an iterable of (type, name) pairs;
    a match is the same (document, type, case-folded name). Returns
    (per-type confusion, macro F1, micro F1).
    """
    unknown = set(predicted) - set(gold)
    if unknown:
        raise TraceError(f"predicted set names unknown document ids: {sorted(unknown)}")

    def normalize(annotations):
        return {(type_name, name.casefold()) for type_name, name in annotations}

    counts: dict[str, dict] = {}

    def bump(type_name, kind):
        slot = counts.setdefault(type_name, {"tp": 0, "fp": 0, "fn": 0})
        slot[kind] += 1

    for doc_id, gold_annotations in gold.items():
        gold_set = normalize(gold_annotations)
        pred_set = normalize(predicted.get(doc_id, ()))
        for type_name, _ in gold_set & pred_set:
            bump(type_name, "tp")
        for type_name, _ in pred_set - gold_set:
            bump(type_name, "fp")
        for type_name, _ in gold_set - pred_set:
            bump(type_name, "fn")
    confusion = {t: Confusion(**c) for t, c in sorted(counts.items())}
    if not confusion:
        confusion = {"none": Confusion()}
    return confusion, macro_f1(confusion), micro_f1(confusion)


def load_annotations(path: Path | str) -> dict:
    """Read the documented annotation JSON:
    {"documents": [{"id", "genre", "entities": [{"type", "name"}]}]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    docs = {}
    for doc in data.get("documents", []):
        docs[doc["id"]] = {
            "genre": doc.get("genre", "paper"),
            "entities": [(e["type"], e["name"]) for e in doc.get("entities", [])],
        }
    return docs


def eval_extraction_by_genre(gold_docs: dict, pred_docs: dict) -> dict:
    """Per-genre and overall macro/micro F1 from annotation maps as
    returned by load_annotations."""
    pred_entities = {doc_id: doc["entities"] for doc_id, doc in pred_docs.items()}
    genres = sorted({doc["genre"] for doc in gold_docs.values()})
    result = {"per_genre": {}, "overall": {}}
    for genre in genres:
        subset = {doc_id: doc["entities"] for doc_id, doc in gold_docs.items()
                  if doc["genre"] == genre}
        subset_pred = {doc_id: pred_entities.get(doc_id, ())
                       for doc_id in subset if doc_id in pred_entities}
        _, macro, micro = eval_extraction(subset, subset_pred)
        result["per_genre"][genre] = {"macro_f1": macro, "micro_f1": micro}
    gold_all = {doc_id: doc["entities"] for doc_id, doc in gold_docs.items()}
    _, macro, micro = eval_extraction(gold_all,
                                      {d: e for d, e in pred_entities.items()
                                       if d in gold_all})
    result["overall"] = {"macro_f1": macro, "micro_f1": micro}
    return result


# -- alignment evaluation ------------------------------------------------------------

@dataclass
class PrecisionRecall:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def eval_alignment(gold_matches: dict, decisions: list) -> PrecisionRecall:
    """Score alignment decisions against labeled candidates.

    ``gold_matches`` maps candidate node id to the correct target id, or
    None for genuinely new entities. Every gold candidate must have a
    decision."""
    by_candidate = {d.candidate.id: d for d in decisions}
    missing = set(gold_matches) - set(by_candidate)
    if missing:
        raise TraceError(f"no decision for gold candidates: {sorted(missing)}")
    tp = fp = fn = 0
    for candidate_id, gold_target in gold_matches.items():
        decision = by_candidate[candidate_id]
        if decision.outcome == "merged":
            if gold_target is not None and decision.target == gold_target:
                tp += 1
            else:
                fp += 1
        elif gold_target is not None:
            fn += 1
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return PrecisionRecall(precision=precision, recall=recall, f1=f1,
                           tp=tp, fp=fp, fn=fn)


# -- coverage -------------------------------------------------------------------------

@dataclass
class CoverageReport:
    nodes: int
    edges: int
    node_types: int
    edge_types: int
    isolated: int
    one_edge: int
    isolated_pct: float  # fraction of all nodes
    one_edge_pct: float
    top_degree_nodes: list = field(default_factory=list)  # (id, degree)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "edges": self.edges,
            "node_types": self.node_types,
            "edge_types": self.edge_types,
            "isolated": self.isolated,
            "one_edge": self.one_edge,
            "isolated_pct": self.isolated_pct,
            "one_edge_pct": self.one_edge_pct,
            "top_degree_nodes": [[node_id, degree]
                                 for node_id, degree in self.top_degree_nodes],
        }


def coverage_report(store: GraphStore, top_n: int = 10) -> CoverageReport:
    counts = store.counts()
    isolated = one_edge = 0
    degrees = []
    for node in store.all_nodes():
        klass = store.degree_class(node.id)
        if klass is DegreeClass.ISOLATED:
            isolated += 1
        elif klass is DegreeClass.ONE_EDGE:
            one_edge += 1
        degrees.append((node.id, store.degree(node.id)))
    degrees.sort(key=lambda pair: (-pair[1], pair[0]))
    total = counts["nodes"]
    return CoverageReport(
        nodes=total,
        edges=counts["edges"],
        node_types=counts["node_types_in_use"],
        edge_types=counts["edge_types_in_use"],
        isolated=isolated,
        one_edge=one_edge,
        isolated_pct=isolated / total if total else 0.0,
        one_edge_pct=one_edge / total if total else 0.0,
        top_degree_nodes=degrees[:top_n],
    )

"""Post-extraction hygiene: scrub characters that break graph tooling and
drop isolated nodes whose names carry no information beyond a serial
number. Sanitization runs rules to a fixed point, so applying it twice
never changes anything; filtering requires BOTH conditions (isolated and
serial-only) before a node is dropped."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SanitizeLoopError

_MAX_PASSES = 100

# Identifier grammars that are never "just a serial number": dropping
# them would cut the case-study entities out of the graph.
KNOWN_IDENTIFIERS = (
    re.compile(r"^CVE-\d{4}-\d{4,}$"),
    re.compile(r"^CWE-\d+$"),
    re.compile(r"^CAPEC-\d+$"),
    re.compile(r"^T\d{4}(?:\.\d{3})?$"),
    re.compile(r"^M\d{4}$"),
    re.compile(r"^DS\d{4}$"),
    re.compile(r"^CAR-\d{4}-\d{2}-\d{3}$"),
    re.compile(r"^D3-[A-Z]{2,}$"),
)

_SERIAL = re.compile(r"^(?:(?:id|no|num|sn|ref|tag)[\s\-_#.:]*)?\d[\d\s\-_#.:]*$",
                     re.IGNORECASE)
_SEPARATORS = " \t-_#.:"


@dataclass
class SanitizeRules:
    """Pattern replacements and deletions applied to node text."""

    replace: dict = field(default_factory=dict)  # regex pattern -> replacement
    delete: list = field(default_factory=list)   # regex patterns

    def __post_init__(self):
        self._compiled = [(re.compile(p), r) for p, r in self.replace.items()]
        self._compiled += [(re.compile(p), "") for p in self.delete]

    @classmethod
    def defaults(cls) -> "SanitizeRules":
        return cls(
            replace={r"\\\\": r"\\", r"--": "-"},
            delete=[r"[\x00-\x08\x0b\x0c\x0e-\x1f]", "[\ud800-\udfff]"],
        )

    @classmethod
    def load(cls, path: Path | str) -> "SanitizeRules":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(replace=data.get("replace", {}), delete=data.get("delete", []))


def sanitize_text(s: str, rules: SanitizeRules | None = None) -> str:
    """Apply the rules until no pattern matches the output (fixed point)."""
    rules = rules or SanitizeRules.defaults()
    for _ in range(_MAX_PASSES):
        out = s
        for pattern, replacement in rules._compiled:
            out = pattern.sub(replacement, out)
        if out == s:
            return out
        s = out
    raise SanitizeLoopError("sanitize rules did not converge; check for expanding rules")


def is_serial_only_name(name: str) -> bool:
    """True when the name, ignoring separators, is nothing but a serial
    number (optionally with an id/no/ref style prefix). Well-known
    identifier grammars are never serial-only."""
    stripped = name.strip()
    if not stripped:
        return True
    for pattern in KNOWN_IDENTIFIERS:
        if pattern.match(stripped):
            return False
    trimmed = stripped.strip(_SEPARATORS)
    if not trimmed:
        return True  # separators only carry no information either
    return bool(_SERIAL.match(trimmed))


@dataclass
class FilterReport:
    kept: list
    dropped: list  # (node, reason) pairs

    def dropped_nodes(self) -> list:
        return [node for node, _ in self.dropped]


def filter_nodes(nodes: list, triples: list, store=None) -> FilterReport:
    """Drop nodes that are BOTH isolated and serial-only named.

    Isolation counts incident triples in the batch and, when a store is
    given, edges already attached to a same-type node with the same
    (case-folded) name. Triples never end up referencing a dropped node
    because a referenced node is by definition not isolated.
    """
    incident = set()
    for t in triples:
        if getattr(t, "verdict", "accepted") == "rejected":
            continue
        src, dst = t.src, t.dst
        incident.add(id(src) if not isinstance(src, str) else src)
        incident.add(id(dst) if not isinstance(dst, str) else dst)

    kept, dropped = [], []
    for node in nodes:
        node_key = getattr(node, "id", None) or id(node)
        referenced = node_key in incident or id(node) in incident
        if not referenced and store is not None:
            referenced = _store_degree(store, node) > 0
        if referenced:
            kept.append(node)
        elif is_serial_only_name(node.name):
            dropped.append((node, "isolated node with serial-only name"))
        else:
            kept.append(node)
    return FilterReport(kept=kept, dropped=dropped)


def _store_degree(store, node) -> int:
    """Degree of the store twin (same type, same case-folded name), if any."""
    wanted = node.name.casefold()
    for existing in store.nodes_by_type(node.type):
        if existing.name.casefold() == wanted:
            return store.degree(existing.id)
    return 0

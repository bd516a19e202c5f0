#!/usr/bin/env python3
"""Generate the labeled 300-candidate alignment fixture.

Three candidate populations, built so the deterministic mock stack is
sufficient to decide them:

  * 100 description twins: same description text as one store node, so
    embedding similarity is exactly 1.0 and the adjudicator band fires.
  * 50 identifier twins: a CVE-named candidate whose description shares
    no tokens with its store counterpart; only the shared native id can
    merge these.
  * 150 genuinely new entities with fresh token material.

The generator verifies with the actual embedder that no "new" candidate
accidentally lands near any store description (max cosine < 0.8), then
writes fixtures/alignment_300.json with gold labels. Fixed seed, stable
output bytes.
"""

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tracekg.oracle_gateway import HashedBagEmbedder, cosine  # noqa: E402

SEED = 20241105
OUT = Path(__file__).resolve().parents[1] / "fixtures" / "alignment_300.json"

ADJECTIVES = [
    "remote", "stealthy", "persistent", "modular", "encrypted", "staged",
    "polymorphic", "interactive", "kernel", "userland", "fileless", "signed",
    "obfuscated", "scripted", "compiled", "beaconing", "dormant", "chained",
    "privileged", "sandboxed", "legacy", "embedded", "virtualized", "cloud",
]
NOUNS = [
    "loader", "dropper", "implant", "stager", "rootkit", "keylogger",
    "scanner", "proxy", "tunnel", "harvester", "injector", "spreader",
    "wiper", "miner", "beacon", "agent", "shim", "hook", "daemon", "worm",
]
VERBS = [
    "exfiltrates", "escalates", "enumerates", "persists", "pivots",
    "intercepts", "spoofs", "bypasses", "corrupts", "replays", "hijacks",
    "tampers", "floods", "probes", "clones", "redirects", "decodes",
    "stages", "relays", "disables",
]
TARGETS = [
    "credential stores", "registry hives", "container runtimes",
    "firmware images", "directory services", "message queues",
    "browser sessions", "hypervisor calls", "backup archives",
    "certificate chains", "build pipelines", "package mirrors",
    "dns resolvers", "boot loaders", "session tokens", "audit trails",
    "kernel drivers", "mail gateways", "industrial controllers",
    "payment terminals",
]


def description(rng: random.Random, salt: int) -> str:
    return (f"A {rng.choice(ADJECTIVES)} {rng.choice(NOUNS)} that "
            f"{rng.choice(VERBS)} {rng.choice(TARGETS)} and "
            f"{rng.choice(VERBS)} {rng.choice(TARGETS)} variant{salt}.")


def main() -> int:
    rng = random.Random(SEED)
    embedder = HashedBagEmbedder()
    store_nodes = []
    candidates = []
    used_descriptions = set()

    def fresh_description(salt):
        while True:
            text = description(rng, salt)
            if text not in used_descriptions:
                used_descriptions.add(text)
                return text

    # 100 description twins over tool/group/technique store nodes
    for i in range(100):
        type_name = ("tool", "group", "technique")[i % 3]
        desc = fresh_description(i)
        node_id = f"seedkb:{type_name}:twin-{i:04d}"
        store_nodes.append({
            "id": node_id, "type": type_name, "name": f"Entity {i:04d}",
            "source": "seedkb", "timestamp": "2024-01-01T00:00:00Z",
            "description": desc, "properties": {},
        })
        candidates.append({
            "type": type_name, "name": f"Entity Alias {i:04d}",
            "description": desc, "gold_target": node_id,
        })

    # 50 identifier twins: same CVE id, disjoint description text
    for i in range(50):
        cve = f"CVE-2023-{10000 + i}"
        store_desc = fresh_description(1000 + i)
        cand_desc = fresh_description(2000 + i)
        node_id = f"seedkb:vulnerability:{cve}"
        store_nodes.append({
            "id": node_id, "type": "vulnerability", "name": cve,
            "source": "seedkb", "timestamp": "2024-01-01T00:00:00Z",
            "description": store_desc, "properties": {},
        })
        candidates.append({
            "type": "vulnerability", "name": cve,
            "description": cand_desc, "gold_target": node_id,
        })

    # 150 genuinely new entities
    for i in range(150):
        type_name = ("tool", "group", "technique", "vulnerability")[i % 4]
        name = f"CVE-2024-{20000 + i}" if type_name == "vulnerability" \
            else f"Novel {type_name.title()} {i:04d}"
        candidates.append({
            "type": type_name, "name": name,
            "description": fresh_description(3000 + i), "gold_target": None,
        })

    # The mock rules must suffice: no "new" candidate may sit near any
    # store description, and no twin may match a *wrong* store node.
    store_vectors = [(n["id"], embedder.embed(n["description"])) for n in store_nodes]
    for cand in candidates:
        vector = embedder.embed(cand["description"])
        for node_id, node_vector in store_vectors:
            sim = cosine(vector, node_vector)
            if cand["gold_target"] is None and sim >= 0.8:
                raise SystemExit(f"fixture broken: new candidate {cand['name']} "
                                 f"has similarity {sim:.3f} to {node_id}")
            if cand["gold_target"] not in (None, node_id) and sim >= 0.8:
                raise SystemExit(f"fixture broken: twin {cand['name']} is close "
                                 f"to the wrong node {node_id} ({sim:.3f})")

    OUT.write_text(json.dumps({
        "seed": SEED,
        "store_nodes": store_nodes,
        "candidates": candidates,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(store_nodes)} store nodes, {len(candidates)} candidates)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

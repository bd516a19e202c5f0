// In-memory GraphApi used by the unit tests: a miniature of the
// case-study graph (CVE, groups, techniques, mitigation, defensive
// entities) with the same pagination and error behavior as the server.

import { ApiError, type GraphApi, type NeighborQuery } from "./api.js";
import type {
  MetricsSummary,
  NeighborItem,
  NodeRecord,
  Paged,
  PathResult,
  TripleRecord,
  TypesResult,
} from "./types.js";

function node(id: string, type: string, name: string,
              description = ""): NodeRecord {
  return {
    id, type, name, description,
    source: id.split(":")[0] ?? "kb",
    timestamp: "2025-01-02T00:00:00Z",
    properties: {},
  };
}

function triple(src: string, relation: string, dst: string): TripleRecord {
  return {
    id: `t:${src}|${relation}|${dst}`,
    src, relation, dst,
    source: "kb",
    timestamp: "2025-01-02T00:00:00Z",
    provenance: null,
  };
}

export const FAKE_NODES: NodeRecord[] = [
  node("docs:vulnerability:CVE-2021-26855", "vulnerability", "CVE-2021-26855",
    "Exchange server-side request forgery"),
  node("docs:group:apt41", "group", "APT41", "tracked espionage group"),
  node("docs:group:hafnium", "group", "Hafnium", "Exchange-focused actor"),
  node("kb:technique:T1190", "technique", "Exploit Public-Facing Application"),
  node("kb:technique:T1548", "technique", "Abuse Elevation Control Mechanism"),
  node("kb:mitigation:M1051", "mitigation", "Update Software"),
  node("kb:data_model:DS0015", "data_model", "Application Log"),
  node("kb:defend_technique:D3-PLA", "defend_technique", "Process Lineage Analysis"),
  node("docs:asset:exchange", "asset", "Microsoft Exchange"),
];

export const FAKE_TRIPLES: TripleRecord[] = [
  triple("docs:group:apt41", "uses", "docs:vulnerability:CVE-2021-26855"),
  triple("docs:group:hafnium", "uses", "docs:vulnerability:CVE-2021-26855"),
  triple("docs:group:apt41", "uses", "kb:technique:T1190"),
  triple("docs:group:apt41", "uses", "kb:technique:T1548"),
  triple("kb:mitigation:M1051", "mitigates", "kb:technique:T1548"),
  triple("kb:data_model:DS0015", "detects", "kb:technique:T1190"),
  triple("kb:defend_technique:D3-PLA", "counter", "kb:technique:T1548"),
  triple("docs:vulnerability:CVE-2021-26855", "reflects", "docs:asset:exchange"),
];

export class FakeGraphApi implements GraphApi {
  calls = 0;

  constructor(private readonly nodes = FAKE_NODES,
              private readonly triples = FAKE_TRIPLES) {}

  private find(id: string): NodeRecord {
    const hit = this.nodes.find((n) => n.id === id);
    if (!hit) {
      throw new ApiError(404, "unknown_node", `no node with id ${id}`);
    }
    return hit;
  }

  async node(id: string): Promise<NodeRecord> {
    this.calls += 1;
    return this.find(id);
  }

  async neighbors(id: string, query: NeighborQuery = {}): Promise<Paged<NeighborItem>> {
    this.calls += 1;
    this.find(id);
    const direction = query.direction ?? "both";
    const matched: NeighborItem[] = [];
    for (const t of this.triples) {
      if (query.relation && t.relation !== query.relation) {
        continue;
      }
      if (t.src === id && (direction === "out" || direction === "both")) {
        matched.push({ triple: t, node: this.find(t.dst) });
      } else if (t.dst === id && (direction === "in" || direction === "both")) {
        matched.push({ triple: t, node: this.find(t.src) });
      }
    }
    matched.sort((a, b) => a.triple.relation.localeCompare(b.triple.relation)
      || a.node.id.localeCompare(b.node.id));
    const offset = query.offset ?? 0;
    const limit = query.limit ?? 50;
    return {
      items: matched.slice(offset, offset + limit),
      total: matched.length,
      limit,
      offset,
    };
  }

  async search(q: string, type?: string | null, limit = 25,
               offset = 0): Promise<Paged<NodeRecord>> {
    this.calls += 1;
    const needle = q.toLowerCase();
    const hits = this.nodes.filter((n) =>
      (!type || n.type === type)
      && (n.name.toLowerCase().includes(needle) || n.id.toLowerCase().includes(needle)));
    return { items: hits.slice(offset, offset + limit), total: hits.length, limit, offset };
  }

  async path(src: string, dst: string, maxHops: number): Promise<PathResult> {
    this.calls += 1;
    this.find(src);
    this.find(dst);
    if (src === dst) {
      return { found: true, hops: 0, triples: [], nodes: [this.find(src)] };
    }
    // textbook undirected BFS with parent pointers
    const parent = new Map<string, { prev: string; via: TripleRecord } | null>();
    parent.set(src, null);
    let frontier = [src];
    for (let hop = 0; hop < maxHops && frontier.length > 0; hop += 1) {
      const next: string[] = [];
      for (const cursor of frontier) {
        for (const t of this.triples) {
          const far = t.src === cursor ? t.dst : t.dst === cursor ? t.src : null;
          if (!far || parent.has(far)) {
            continue;
          }
          parent.set(far, { prev: cursor, via: t });
          if (far === dst) {
            const triples: TripleRecord[] = [];
            const ids: string[] = [dst];
            let walk: string = dst;
            while (parent.get(walk)) {
              const step = parent.get(walk)!;
              triples.unshift(step.via);
              walk = step.prev;
              ids.unshift(walk);
            }
            return {
              found: true,
              hops: triples.length,
              triples,
              nodes: ids.map((i) => this.find(i)),
            };
          }
          next.push(far);
        }
      }
      frontier = next;
    }
    return { found: false, hops: null, triples: [], nodes: [] };
  }

  async types(): Promise<TypesResult> {
    this.calls += 1;
    const relations = [...new Set(this.triples.map((t) => t.relation))].sort();
    const entities = [...new Set(this.nodes.map((n) => n.type))].sort();
    return {
      entity_types: entities.map((name) => ({ name })),
      relation_types: relations.map((name) => ({ name })),
      ontology_version: 1,
    };
  }

  async metricsSummary(): Promise<MetricsSummary> {
    this.calls += 1;
    return {
      nodes: this.nodes.length,
      edges: this.triples.length,
      node_types: new Set(this.nodes.map((n) => n.type)).size,
      edge_types: new Set(this.triples.map((t) => t.relation)).size,
      isolated: 0,
      one_edge: 0,
    };
  }
}

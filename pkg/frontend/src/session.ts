// Explorer session state: which nodes and edges are on the canvas, what
// is selected and highlighted, which relation filters are active, and
// the breadcrumb trail that makes every view reproducible. All graph
// data comes from the API; the session never writes anywhere.

import { allNeighbors, type GraphApi } from "./api.js";
import type { Direction, NodeRecord, TripleRecord } from "./types.js";

export interface ViewNode {
  id: string;
  type: string;
  name: string;
  pinned: boolean;
  expandedRelations: Set<string>; // relation names expanded from this node
  record: NodeRecord;
}

export interface ViewEdge {
  id: string;
  src: string;
  dst: string;
  relation: string;
  record: TripleRecord;
}

export type Breadcrumb =
  | { kind: "seed"; nodeId: string }
  | { kind: "expand"; nodeId: string; relation: string | null; direction: Direction }
  | { kind: "trace"; srcId: string; dstId: string; maxHops: number }
  | { kind: "select"; nodeId: string | null }
  | { kind: "pin"; nodeId: string; pinned: boolean }
  | { kind: "relation-filter"; relations: string[] };

export interface ExpandDelta {
  addedNodes: ViewNode[];
  addedEdges: ViewEdge[];
}

export interface TraceOutcome {
  found: boolean;
  hops: number | null;
}

export class ExplorerSession {
  readonly nodes = new Map<string, ViewNode>();
  readonly edges = new Map<string, ViewEdge>();
  readonly breadcrumbs: Breadcrumb[] = [];
  selection: string | null = null;
  highlightedNodes = new Set<string>();
  highlightedEdges = new Set<string>();
  relationFilters = new Set<string>(); // empty set means "show everything"
  knownRelations = new Set<string>();

  constructor(private readonly api: GraphApi) {}

  /** Load the relation vocabulary; expansions are validated against it. */
  async init(): Promise<void> {
    const types = await this.api.types();
    this.knownRelations = new Set(types.relation_types.map((r) => r.name));
  }

  async search(q: string, type?: string | null): Promise<NodeRecord[]> {
    const page = await this.api.search(q, type ?? null);
    return page.items;
  }

  /** Put one searched node on the empty or existing canvas. */
  async seed(nodeId: string): Promise<ViewNode> {
    const record = await this.api.node(nodeId);
    const node = this.addNode(record);
    this.breadcrumbs.push({ kind: "seed", nodeId });
    this.selection = nodeId;
    return node;
  }

  /** Pull one hop of neighbors onto the canvas. Existing view nodes are
   * never duplicated; the relation used is remembered per node. */
  async expand(nodeId: string, relation: string | null = null,
               direction: Direction = "both"): Promise<ExpandDelta> {
    const origin = this.nodes.get(nodeId);
    if (!origin) {
      throw new Error(`cannot expand ${nodeId}: not on the canvas`);
    }
    if (relation !== null && !this.knownRelations.has(relation)) {
      throw new Error(`unknown relation: ${relation}`);
    }
    const items = await allNeighbors(this.api, nodeId, { relation, direction });
    const delta: ExpandDelta = { addedNodes: [], addedEdges: [] };
    for (const item of items) {
      if (!this.nodes.has(item.node.id)) {
        delta.addedNodes.push(this.addNode(item.node));
      }
      if (!this.edges.has(item.triple.id)) {
        delta.addedEdges.push(this.addEdge(item.triple));
      }
    }
    origin.expandedRelations.add(relation ?? "*");
    this.breadcrumbs.push({ kind: "expand", nodeId, relation, direction });
    return delta;
  }

  /** Highlight a route between two nodes; an absent path changes nothing. */
  async tracePath(srcId: string, dstId: string, maxHops: number): Promise<TraceOutcome> {
    const result = await this.api.path(srcId, dstId, maxHops);
    this.breadcrumbs.push({ kind: "trace", srcId, dstId, maxHops });
    if (!result.found) {
      return { found: false, hops: null };
    }
    this.highlightedNodes = new Set(result.nodes.map((n) => n.id));
    this.highlightedEdges = new Set(result.triples.map((t) => t.id));
    for (const record of result.nodes) {
      if (!this.nodes.has(record.id)) {
        this.addNode(record);
      }
    }
    for (const triple of result.triples) {
      if (!this.edges.has(triple.id)) {
        this.addEdge(triple);
      }
    }
    return { found: true, hops: result.hops };
  }

  select(nodeId: string | null): void {
    if (nodeId !== null && !this.nodes.has(nodeId)) {
      throw new Error(`cannot select ${nodeId}: not on the canvas`);
    }
    this.selection = nodeId;
    this.breadcrumbs.push({ kind: "select", nodeId });
  }

  setPinned(nodeId: string, pinned: boolean): void {
    const node = this.nodes.get(nodeId);
    if (!node) {
      throw new Error(`cannot pin ${nodeId}: not on the canvas`);
    }
    node.pinned = pinned;
    this.breadcrumbs.push({ kind: "pin", nodeId, pinned });
  }

  /** Restrict the rendered edges to these relations (empty = show all). */
  setRelationFilter(relations: string[]): void {
    for (const relation of relations) {
      if (!this.knownRelations.has(relation)) {
        throw new Error(`unknown relation: ${relation}`);
      }
    }
    this.relationFilters = new Set(relations);
    this.breadcrumbs.push({ kind: "relation-filter", relations: [...relations] });
  }

  visibleEdges(): ViewEdge[] {
    const edges = [...this.edges.values()];
    if (this.relationFilters.size === 0) {
      return edges;
    }
    return edges.filter((e) => this.relationFilters.has(e.relation));
  }

  /** Every rendered edge must connect two rendered nodes. */
  integrityHolds(): boolean {
    for (const edge of this.edges.values()) {
      if (!this.nodes.has(edge.src) || !this.nodes.has(edge.dst)) {
        return false;
      }
    }
    return true;
  }

  /** Reconstruct a session by re-running a breadcrumb trail. */
  static async replay(api: GraphApi, trail: Breadcrumb[]): Promise<ExplorerSession> {
    const session = new ExplorerSession(api);
    await session.init();
    for (const crumb of trail) {
      switch (crumb.kind) {
        case "seed":
          await session.seed(crumb.nodeId);
          break;
        case "expand":
          await session.expand(crumb.nodeId, crumb.relation, crumb.direction);
          break;
        case "trace":
          await session.tracePath(crumb.srcId, crumb.dstId, crumb.maxHops);
          break;
        case "select":
          session.select(crumb.nodeId);
          break;
        case "pin":
          session.setPinned(crumb.nodeId, crumb.pinned);
          break;
        case "relation-filter":
          session.setRelationFilter(crumb.relations);
          break;
      }
    }
    return session;
  }

  /** Canonical view comparison key used by tests and the replay button. */
  snapshot(): string {
    return JSON.stringify({
      nodes: [...this.nodes.keys()].sort(),
      edges: [...this.edges.keys()].sort(),
      expanded: [...this.nodes.values()]
        .map((n) => [n.id, [...n.expandedRelations].sort()] as const)
        .sort((a, b) => a[0].localeCompare(b[0])),
      pinned: [...this.nodes.values()].filter((n) => n.pinned).map((n) => n.id).sort(),
      selection: this.selection,
      highlightedNodes: [...this.highlightedNodes].sort(),
      highlightedEdges: [...this.highlightedEdges].sort(),
      relationFilters: [...this.relationFilters].sort(),
    });
  }

  private addNode(record: NodeRecord): ViewNode {
    const node: ViewNode = {
      id: record.id,
      type: record.type,
      name: record.name,
      pinned: false,
      expandedRelations: new Set(),
      record,
    };
    this.nodes.set(record.id, node);
    return node;
  }

  private addEdge(record: TripleRecord): ViewEdge {
    // seed/expand/trace only ever add edges whose endpoints were added in
    // the same step, so the integrity invariant holds by construction
    const edge: ViewEdge = {
      id: record.id,
      src: record.src,
      dst: record.dst,
      relation: record.relation,
      record,
    };
    this.edges.set(record.id, edge);
    return edge;
  }
}

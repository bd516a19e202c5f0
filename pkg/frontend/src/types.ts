// Payload shapes of the /v1 graph API.

export interface NodeRecord {
  id: string;
  type: string;
  name: string;
  source: string;
  timestamp: string;
  description: string;
  properties: Record<string, unknown>;
}

export interface TripleRecord {
  id: string;
  src: string;
  relation: string;
  dst: string;
  source: string;
  timestamp: string;
  provenance: string | null;
}

export interface NeighborItem {
  triple: TripleRecord;
  node: NodeRecord;
}

export interface Paged<T> {
  items: T[];
  total: number;
  limit: number;
  offset: number;
}

export interface PathResult {
  found: boolean;
  hops: number | null;
  triples: TripleRecord[];
  nodes: NodeRecord[];
}

export interface TypeInfo {
  name: string;
  dimension?: string;
  origin?: string;
}

export interface TypesResult {
  entity_types: TypeInfo[];
  relation_types: TypeInfo[];
  ontology_version: number;
}

export interface MetricsSummary {
  nodes: number;
  edges: number;
  node_types: number;
  edge_types: number;
  isolated: number;
  one_edge: number;
}

export type Direction = "out" | "in" | "both";

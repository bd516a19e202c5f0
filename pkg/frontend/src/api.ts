// Thin typed client over the read-only /v1 graph API.

import type {
  Direction,
  MetricsSummary,
  NeighborItem,
  NodeRecord,
  Paged,
  PathResult,
  TypesResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export interface NeighborQuery {
  relation?: string | null;
  direction?: Direction;
  limit?: number;
  offset?: number;
}

/** Everything the explorer needs from the backend; the tests substitute
 * an in-memory fake behind the same interface. */
export interface GraphApi {
  node(id: string): Promise<NodeRecord>;
  neighbors(id: string, query?: NeighborQuery): Promise<Paged<NeighborItem>>;
  search(q: string, type?: string | null, limit?: number, offset?: number): Promise<Paged<NodeRecord>>;
  path(src: string, dst: string, maxHops: number): Promise<PathResult>;
  types(): Promise<TypesResult>;
  metricsSummary(): Promise<MetricsSummary>;
}

export class HttpGraphApi implements GraphApi {
  constructor(private readonly baseUrl: string) {}

  private async get<T>(path: string, params?: Record<string, string | number | null | undefined>): Promise<T> {
    const url = new URL(`${this.baseUrl.replace(/\/+$/, "")}${path}`);
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== null && value !== undefined && value !== "") {
        url.searchParams.set(key, String(value));
      }
    }
    let response: Response;
    try {
      response = await fetch(url.toString());
    } catch (err) {
      throw new ApiError(0, "unreachable", `API unreachable: ${String(err)}`);
    }
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body.code ?? "error",
        body.message ?? response.statusText);
    }
    return body as T;
  }

  node(id: string): Promise<NodeRecord> {
    return this.get(`/v1/nodes/${encodeURIComponent(id)}`);
  }

  neighbors(id: string, query: NeighborQuery = {}): Promise<Paged<NeighborItem>> {
    return this.get(`/v1/nodes/${encodeURIComponent(id)}/neighbors`, {
      relation: query.relation ?? undefined,
      direction: query.direction ?? "both",
      limit: query.limit ?? 200,
      offset: query.offset ?? 0,
    });
  }

  search(q: string, type?: string | null, limit = 25, offset = 0): Promise<Paged<NodeRecord>> {
    return this.get("/v1/search", { q, type: type ?? undefined, limit, offset });
  }

  path(src: string, dst: string, maxHops: number): Promise<PathResult> {
    return this.get("/v1/path", { src, dst, max_hops: maxHops });
  }

  types(): Promise<TypesResult> {
    return this.get("/v1/types");
  }

  metricsSummary(): Promise<MetricsSummary> {
    return this.get("/v1/metrics/summary");
  }
}

/** Fetch every neighbor page; the session works on complete neighborhoods. */
export async function allNeighbors(api: GraphApi, id: string,
                                   query: NeighborQuery = {}): Promise<NeighborItem[]> {
  const pageSize = query.limit ?? 200;
  const items: NeighborItem[] = [];
  let offset = 0;
  for (;;) {
    const page = await api.neighbors(id, { ...query, limit: pageSize, offset });
    items.push(...page.items);
    offset += page.items.length;
    if (offset >= page.total || page.items.length === 0) {
      return items;
    }
  }
}

// Wires the explorer together: search panel, SVG canvas, node detail,
// expansion controls, path tracing, relation filters, and the breadcrumb
// trail with one-click replay.

import { HttpGraphApi } from "./api.js";
import { RadialLayout } from "./layout.js";
import { renderDetail, renderGraph } from "./render.js";
import { ExplorerSession } from "./session.js";
import type { Direction, NodeRecord } from "./types.js";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? window.location.origin;
}

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

class ExplorerApp {
  private readonly api = new HttpGraphApi(apiBase());
  private session = new ExplorerSession(this.api);
  private layout = new RadialLayout(1200, 800);

  private readonly svg = el<HTMLElement>("canvas") as unknown as SVGSVGElement;
  private readonly results = el<HTMLUListElement>("search-results");
  private readonly detail = el<HTMLElement>("detail-panel");
  private readonly crumbs = el<HTMLOListElement>("breadcrumbs");
  private readonly status = el<HTMLElement>("status-line");
  private readonly relationSelect = el<HTMLSelectElement>("expand-relation");
  private readonly filterBox = el<HTMLElement>("relation-filters");

  async start(): Promise<void> {
    try {
      await this.session.init();
    } catch (err) {
      this.say(`API unreachable at ${apiBase()}; is the server running? (${String(err)})`);
      return;
    }
    this.populateRelations();
    this.bind();
    this.say(`connected to ${apiBase()}`);
  }

  private bind(): void {
    el<HTMLFormElement>("search-form").addEventListener("submit", async (event) => {
      event.preventDefault();
      const q = el<HTMLInputElement>("search-input").value.trim();
      const type = el<HTMLSelectElement>("search-type").value || null;
      if (!q) {
        return;
      }
      try {
        this.showResults(await this.session.search(q, type));
      } catch (err) {
        this.say(`search failed: ${String(err)} (view preserved)`);
      }
    });

    el<HTMLButtonElement>("expand-button").addEventListener("click", () => {
      void this.expandSelection();
    });

    el<HTMLFormElement>("trace-form").addEventListener("submit", async (event) => {
      event.preventDefault();
      const dstQuery = el<HTMLInputElement>("trace-target").value.trim();
      const maxHops = Number(el<HTMLInputElement>("trace-hops").value) || 4;
      await this.trace(dstQuery, maxHops);
    });

    el<HTMLButtonElement>("replay-button").addEventListener("click", () => {
      void this.replay();
    });
  }

  private populateRelations(): void {
    this.relationSelect.replaceChildren(new Option("any relation", ""));
    this.filterBox.replaceChildren();
    for (const relation of [...this.session.knownRelations].sort()) {
      this.relationSelect.append(new Option(relation, relation));
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.value = relation;
      box.addEventListener("change", () => this.applyFilters());
      label.append(box, ` ${relation}`);
      this.filterBox.append(label);
    }
  }

  private applyFilters(): void {
    const active = [...this.filterBox.querySelectorAll<HTMLInputElement>("input:checked")]
      .map((box) => box.value);
    this.session.setRelationFilter(active);
    this.redraw();
  }

  private showResults(hits: NodeRecord[]): void {
    this.results.replaceChildren();
    if (hits.length === 0) {
      const empty = document.createElement("li");
      empty.className = "hint";
      empty.textContent = "no matches";
      this.results.append(empty);
      return;
    }
    for (const hit of hits) {
      const item = document.createElement("li");
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = hit.type;
      item.append(badge, ` ${hit.name}`);
      item.addEventListener("click", async () => {
        await this.session.seed(hit.id);
        this.layout.placeSeed(hit.id);
        this.redraw();
        this.say(`seeded ${hit.name}`);
      });
      this.results.append(item);
    }
  }

  private async expandSelection(): Promise<void> {
    const nodeId = this.session.selection;
    if (!nodeId) {
      this.say("select a node first");
      return;
    }
    const relation = this.relationSelect.value || null;
    const direction = el<HTMLSelectElement>("expand-direction").value as Direction;
    try {
      const delta = await this.session.expand(nodeId, relation, direction);
      this.layout.placeAround(nodeId, delta.addedNodes.map((n) => n.id));
      this.redraw();
      this.say(delta.addedNodes.length === 0 && delta.addedEdges.length === 0
        ? "no new neighbors for that relation"
        : `added ${delta.addedNodes.length} nodes, ${delta.addedEdges.length} edges`);
    } catch (err) {
      this.say(`expand failed: ${String(err)} (view unchanged)`);
    }
  }

  private async trace(dstQuery: string, maxHops: number): Promise<void> {
    const srcId = this.session.selection;
    if (!srcId) {
      this.say("select the starting node first");
      return;
    }
    try {
      let dstId = dstQuery;
      if (!this.session.nodes.has(dstId)) {
        const hits = await this.session.search(dstQuery);
        if (hits.length === 0 || !hits[0]) {
          this.say(`no node matches "${dstQuery}"`);
          return;
        }
        dstId = hits[0].id;
      }
      const outcome = await this.session.tracePath(srcId, dstId, maxHops);
      if (!outcome.found) {
        this.say(`no path within ${maxHops} hops`);
        return;
      }
      for (const nodeId of this.session.highlightedNodes) {
        if (!this.layout.get(nodeId)) {
          this.layout.placeAround(srcId, [nodeId]);
        }
      }
      this.redraw();
      this.say(`highlighted a ${outcome.hops}-hop route`);
    } catch (err) {
      this.say(`trace failed: ${String(err)} (view unchanged)`);
    }
  }

  private async replay(): Promise<void> {
    const before = this.session.snapshot();
    const replayed = await ExplorerSession.replay(this.api, this.session.breadcrumbs);
    const faithful = replayed.snapshot() === before;
    this.session = replayed;
    this.redraw();
    this.say(faithful ? "breadcrumb replay reconstructed the view exactly"
      : "replay diverged; the backing graph has changed since");
  }

  private redraw(): void {
    renderGraph(this.svg, this.session, this.layout, {
      onNodeClick: (nodeId) => {
        this.session.select(nodeId);
        this.redraw();
      },
      onNodeDoubleClick: (nodeId) => {
        this.session.select(nodeId);
        void this.expandSelection();
      },
    });
    renderDetail(this.detail,
      this.session.selection ? this.session.nodes.get(this.session.selection) ?? null : null);
    this.crumbs.replaceChildren();
    for (const crumb of this.session.breadcrumbs) {
      const item = document.createElement("li");
      item.textContent = describeCrumb(crumb);
      this.crumbs.append(item);
    }
    if (!this.session.integrityHolds()) {
      this.say("warning: dangling edge detected (this is a bug)");
    }
  }

  private say(message: string): void {
    this.status.textContent = message;
  }
}

function describeCrumb(crumb: { kind: string } & Record<string, unknown>): string {
  switch (crumb.kind) {
    case "seed":
      return `seed ${String(crumb["nodeId"])}`;
    case "expand":
      return `expand ${String(crumb["nodeId"])} via ${String(crumb["relation"] ?? "any")}`;
    case "trace":
      return `trace ${String(crumb["srcId"])} to ${String(crumb["dstId"])}`;
    case "select":
      return `select ${String(crumb["nodeId"] ?? "nothing")}`;
    case "pin":
      return `pin ${String(crumb["nodeId"])}`;
    case "relation-filter":
      return `filter ${JSON.stringify(crumb["relations"])}`;
    default:
      return crumb.kind;
  }
}

void new ExplorerApp().start();

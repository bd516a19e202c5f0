// SVG rendering of the session's view graph. Stateless: every call
// redraws from the session and layout, so the DOM always mirrors them.

import type { RadialLayout } from "./layout.js";
import type { ExplorerSession, ViewNode } from "./session.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const TYPE_COLORS: Record<string, string> = {
  vulnerability: "#c0392b",
  vuln: "#c0392b",
  group: "#8e44ad",
  technique: "#d35400",
  tool: "#16a085",
  asset: "#2980b9",
  mitigation: "#27ae60",
  defend_technique: "#27ae60",
  analytics: "#2c3e50",
  data_model: "#7f8c8d",
};

export function colorFor(type: string): string {
  return TYPE_COLORS[type] ?? "#34495e";
}

export interface RenderCallbacks {
  onNodeClick(nodeId: string): void;
  onNodeDoubleClick(nodeId: string): void;
}

export function renderGraph(svg: SVGSVGElement, session: ExplorerSession,
                            layout: RadialLayout,
                            callbacks: RenderCallbacks): void {
  svg.replaceChildren();
  const edgeLayer = document.createElementNS(SVG_NS, "g");
  const nodeLayer = document.createElementNS(SVG_NS, "g");
  svg.append(edgeLayer, nodeLayer);

  for (const edge of session.visibleEdges()) {
    const a = layout.get(edge.src);
    const b = layout.get(edge.dst);
    if (!a || !b) {
      continue;
    }
    const highlighted = session.highlightedEdges.has(edge.id);
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y));
    line.setAttribute("stroke", highlighted ? "#e67e22" : "#b0b8bf");
    line.setAttribute("stroke-width", highlighted ? "4" : "1.5");
    edgeLayer.append(line);

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String((a.x + b.x) / 2));
    label.setAttribute("y", String((a.y + b.y) / 2 - 4));
    label.setAttribute("class", "edge-label");
    label.textContent = edge.relation;
    edgeLayer.append(label);
  }

  for (const node of session.nodes.values()) {
    const point = layout.get(node.id);
    if (!point) {
      continue;
    }
    nodeLayer.append(renderNode(node, point.x, point.y, session, callbacks));
  }
}

function renderNode(node: ViewNode, x: number, y: number,
                    session: ExplorerSession,
                    callbacks: RenderCallbacks): SVGGElement {
  const group = document.createElementNS(SVG_NS, "g");
  group.setAttribute("transform", `translate(${x}, ${y})`);
  group.setAttribute("data-node-id", node.id);
  group.setAttribute("class", "view-node");

  const circle = document.createElementNS(SVG_NS, "circle");
  circle.setAttribute("r", node.id === session.selection ? "14" : "10");
  circle.setAttribute("fill", colorFor(node.type));
  if (session.highlightedNodes.has(node.id)) {
    circle.setAttribute("stroke", "#e67e22");
    circle.setAttribute("stroke-width", "4");
  } else if (node.id === session.selection) {
    circle.setAttribute("stroke", "#f1c40f");
    circle.setAttribute("stroke-width", "3");
  }
  if (node.pinned) {
    circle.setAttribute("stroke-dasharray", "3 2");
  }
  group.append(circle);

  const label = document.createElementNS(SVG_NS, "text");
  label.setAttribute("y", "-16");
  label.setAttribute("class", "node-label");
  label.textContent = node.name.length > 28 ? `${node.name.slice(0, 27)}…` : node.name;
  group.append(label);

  group.addEventListener("click", () => callbacks.onNodeClick(node.id));
  group.addEventListener("dblclick", () => callbacks.onNodeDoubleClick(node.id));
  return group;
}

export function renderDetail(panel: HTMLElement, node: ViewNode | null): void {
  panel.replaceChildren();
  if (!node) {
    const hint = document.createElement("p");
    hint.className = "hint";
    hint.textContent = "Select a node to inspect its properties.";
    panel.append(hint);
    return;
  }
  const title = document.createElement("h3");
  title.textContent = node.name;
  panel.append(title);

  const table = document.createElement("table");
  const rows: Array<[string, string]> = [
    ["id", node.id],
    ["type", node.type],
    ["source", node.record.source],
    ["timestamp", node.record.timestamp],
    ["description", node.record.description || "(empty)"],
  ];
  for (const [key, value] of Object.entries(node.record.properties)) {
    rows.push([key, JSON.stringify(value)]);
  }
  for (const [key, value] of rows) {
    const tr = document.createElement("tr");
    const th = document.createElement("th");
    th.textContent = key;
    const td = document.createElement("td");
    td.textContent = value;
    tr.append(th, td);
    table.append(tr);
  }
  panel.append(table);
}

import { PairView, Question, SessionSummary } from "./schema.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const COLOR_A = "#2563eb";
const COLOR_B = "#ea580c";

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

/** Position within [0, 1] along the objective's reachable range; values are
 * displayed as received, never recomputed. */
function axisFraction(value: number, low: number, high: number): number {
  if (!(high > low)) return 0.5;
  return Math.min(1, Math.max(0, (value - low) / (high - low)));
}

export function formatNumber(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1e4 || abs < 1e-3) return v.toExponential(3);
  return String(Math.round(v * 1e4) / 1e4);
}

/** Two bars per objective, scaled by the problem's reachable range. */
export function groupedBars(pair: PairView): SVGSVGElement {
  const k = pair.objective_names.length;
  const groupWidth = 72;
  const height = 160;
  const svg = svgEl("svg", {
    width: k * groupWidth + 20,
    height: height + 36,
    class: "grouped-bars",
    role: "img",
  });
  pair.objective_names.forEach((name, i) => {
    const x0 = 10 + i * groupWidth;
    const low = pair.axis_low[i] ?? 0;
    const high = pair.axis_high[i] ?? 1;
    const values: Array<[number, string]> = [
      [pair.y1[i] ?? 0, COLOR_A],
      [pair.y2[i] ?? 0, COLOR_B],
    ];
    values.forEach(([value, color], which) => {
      const h = Math.max(2, axisFraction(value, low, high) * height);
      const bar = svgEl("rect", {
        x: x0 + which * 26,
        y: height - h + 8,
        width: 22,
        height: h,
        fill: color,
        "data-objective": i,
        "data-option": which === 0 ? "a" : "b",
      });
      const title = svgEl("title", {});
      title.textContent = `${name} (${which === 0 ? "A" : "B"}): ${formatNumber(value)}`;
      bar.appendChild(title);
      svg.appendChild(bar);
    });
    const label = svgEl("text", {
      x: x0 + 26,
      y: height + 24,
      "text-anchor": "middle",
      class: "axis-label",
    });
    label.textContent = name;
    svg.appendChild(label);
  });
  return svg;
}

/** One vertical axis per objective, each output a polyline across axes. */
export function parallelCoordinates(pair: PairView): SVGSVGElement {
  const k = pair.objective_names.length;
  const spacing = 84;
  const height = 150;
  const svg = svgEl("svg", {
    width: (k - 1) * spacing + 60,
    height: height + 40,
    class: "parallel-coords",
    role: "img",
  });
  for (let i = 0; i < k; i++) {
    const x = 30 + i * spacing;
    svg.appendChild(
      svgEl("line", { x1: x, y1: 10, x2: x, y2: height + 10, class: "pc-axis" }),
    );
    const label = svgEl("text", {
      x,
      y: height + 32,
      "text-anchor": "middle",
      class: "axis-label",
    });
    label.textContent = pair.objective_names[i] ?? `f${i + 1}`;
    svg.appendChild(label);
  }
  const lineFor = (values: number[], color: string, option: string) => {
    const points = values
      .map((v, i) => {
        const frac = axisFraction(v, pair.axis_low[i] ?? 0, pair.axis_high[i] ?? 1);
        return `${30 + i * spacing},${height + 10 - frac * height}`;
      })
      .join(" ");
    return svgEl("polyline", {
      points,
      fill: "none",
      stroke: color,
      "stroke-width": 2.5,
      "data-option": option,
    });
  };
  svg.appendChild(lineFor(pair.y1, COLOR_A, "a"));
  svg.appendChild(lineFor(pair.y2, COLOR_B, "b"));
  return svg;
}

export function renderPair(container: HTMLElement, pair: PairView): void {
  container.replaceChildren();
  const heading = document.createElement("p");
  heading.className = "pair-heading";
  heading.textContent = `Question ${pair.question_id} - which output do you prefer?`;
  container.appendChild(heading);
  const charts = document.createElement("div");
  charts.className = "charts";
  charts.appendChild(groupedBars(pair));
  charts.appendChild(parallelCoordinates(pair));
  container.appendChild(charts);
  const table = document.createElement("table");
  table.className = "pair-table";
  const header = table.insertRow();
  ["objective", "A", "B"].forEach((text) => {
    const th = document.createElement("th");
    th.textContent = text;
    header.appendChild(th);
  });
  pair.objective_names.forEach((name, i) => {
    const row = table.insertRow();
    row.insertCell().textContent = name;
    row.insertCell().textContent = formatNumber(pair.y1[i] ?? NaN);
    row.insertCell().textContent = formatNumber(pair.y2[i] ?? NaN);
  });
  container.appendChild(table);
}

export function renderHistory(container: HTMLElement, questions: Question[]): void {
  container.replaceChildren();
  const answered = questions.filter((q) => q.label !== null);
  if (answered.length === 0) {
    container.textContent = "No answers yet.";
    return;
  }
  const list = document.createElement("ol");
  list.className = "history";
  for (const q of answered) {
    const item = document.createElement("li");
    const verdict = q.label === 1 ? "preferred A" : q.label === -1 ? "preferred B" : "tie";
    item.textContent =
      `#${q.question_id} (iteration ${q.iteration}): ${verdict} - ` +
      `A=[${q.y1.map(formatNumber).join(", ")}] B=[${q.y2.map(formatNumber).join(", ")}]`;
    item.dataset.questionId = String(q.question_id);
    list.appendChild(item);
  }
  container.appendChild(list);
}

export function renderBestOutputs(container: HTMLElement, session: SessionSummary): void {
  container.replaceChildren();
  if (session.best_outputs.length === 0) {
    container.textContent = "Model ranking appears after the first optimization step.";
    return;
  }
  const list = document.createElement("ol");
  list.className = "best-outputs";
  for (const entry of session.best_outputs) {
    const item = document.createElement("li");
    item.textContent = `observation ${entry.index}: [${entry.y.map(formatNumber).join(", ")}]`;
    list.appendChild(item);
  }
  container.appendChild(list);
}

/**
 * The four figure kinds rendered from results tables.
 *
 * Every figure is a deterministic SVG string: series are emitted in a
 * fixed order inside <g class="series" data-name="..."> groups, axes
 * carry the canonical "P_m [dBW]" and "WSEE" labels, and identical
 * inputs produce identical bytes.
 */

import { ticks as d3ticks } from "d3-array";
import {
  meanCurve,
  methodsIn,
  perChannelMeans,
  ResultRow,
} from "./schema.js";
import {
  axes,
  document,
  HEIGHT,
  legend,
  linearScale,
  MARGIN,
  PALETTE,
  WIDTH,
} from "./svg.js";

export type FigureKind = "curve" | "histogram" | "milestones" | "finetune-bars";

export const FIGURE_KINDS: FigureKind[] = [
  "curve",
  "histogram",
  "milestones",
  "finetune-bars",
];

export interface NamedTable {
  label: string;
  rows: ResultRow[];
}

export function selectMethods(rows: ResultRow[], filter?: string[]): string[] {
  const present = methodsIn(rows);
  if (!filter || filter.length === 0) {
    return present;
  }
  const picked = filter.filter((m) => present.includes(m));
  if (picked.length === 0) {
    throw new Error(
      `method filter [${filter.join(", ")}] matches nothing; table has [${present.join(", ")}]`,
    );
  }
  return picked;
}

const PLOT_X: [number, number] = [MARGIN.left, WIDTH - MARGIN.right];
const PLOT_Y: [number, number] = [HEIGHT - MARGIN.bottom, MARGIN.top];

function seriesGroup(name: string, body: string): string {
  return `<g class="series" data-name="${name}">\n${body}\n</g>`;
}

function polyline(points: [number, number][], color: string): string {
  const attr = points.map(([px, py]) => `${px.toFixed(2)},${py.toFixed(2)}`).join(" ");
  return `<polyline points="${attr}" fill="none" stroke="${color}" stroke-width="1.5"/>`;
}

/** WSEE-vs-budget mean curves, one line per method. */
export function curveFigure(rows: ResultRow[], filter?: string[]): string {
  const methods = selectMethods(rows, filter);
  const curves = methods.map((m) => meanCurve(rows, m));
  const pms = curves.flatMap((c) => c.map((p) => p.pmDbw));
  const vals = curves.flatMap((c) => c.map((p) => p.wsee));
  const x = linearScale([Math.min(...pms), Math.max(...pms)], PLOT_X);
  const y = linearScale([0, Math.max(...vals) * 1.05], PLOT_Y);
  const body = methods.map((m, i) =>
    seriesGroup(
      m,
      polyline(
        curves[i].map((p) => [x(p.pmDbw), y(p.wsee)]),
        PALETTE[i % PALETTE.length],
      ),
    ),
  );
  return document(
    [axes(x, y, "P_m [dBW]", "WSEE"), ...body, legend(methods)].join("\n"),
  );
}

/** Histogram of per-channel WSEE means (each channel averaged over all
 * budgets first), grouped bars per method. */
export function histogramFigure(rows: ResultRow[], filter?: string[]): string {
  const methods = selectMethods(rows, filter);
  const samples = methods.map((m) => perChannelMeans(rows, m));
  const all = samples.flat();
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const edges = d3ticks(lo, hi, 10);
  if (edges[0] > lo) edges.unshift(edges[0] - (edges[1] - edges[0]));
  if (edges[edges.length - 1] < hi) {
    edges.push(edges[edges.length - 1] + (edges[1] - edges[0]));
  }
  const counts = samples.map((vals) => {
    const c = new Array(edges.length - 1).fill(0);
    for (const v of vals) {
      let k = edges.findIndex((e, i) => i + 1 < edges.length && v >= e && v < edges[i + 1]);
      if (k < 0) k = edges.length - 2; // the top edge is inclusive
      c[k] += 1;
    }
    return c;
  });
  const x = linearScale([edges[0], edges[edges.length - 1]], PLOT_X);
  const y = linearScale([0, Math.max(...counts.flat(), 1) * 1.1], PLOT_Y);
  const body = methods.map((m, i) => {
    const bars = counts[i]
      .map((count, k) => {
        if (count === 0) return "";
        const binLeft = x(edges[k]);
        const binRight = x(edges[k + 1]);
        const slot = (binRight - binLeft) / methods.length;
        const x0 = binLeft + i * slot;
        const y0 = y(count);
        return (
          `<rect x="${x0.toFixed(2)}" y="${y0.toFixed(2)}" ` +
          `width="${(slot * 0.9).toFixed(2)}" height="${(PLOT_Y[0] - y0).toFixed(2)}" ` +
          `fill="${PALETTE[i % PALETTE.length]}"/>`
        );
      })
      .filter((s) => s.length > 0);
    return seriesGroup(m, bars.join("\n"));
  });
  return document(
    [axes(x, y, "WSEE", "channels"), ...body, legend(methods)].join("\n"),
  );
}

/** One mean curve per input table; used to compare training milestones. */
export function milestonesFigure(tables: NamedTable[], filter?: string[]): string {
  const series: { name: string; curve: { pmDbw: number; wsee: number }[] }[] = [];
  for (const table of tables) {
    for (const m of selectMethods(table.rows, filter)) {
      const name = tables.length > 1 ? `${table.label}:${m}` : m;
      series.push({ name, curve: meanCurve(table.rows, m) });
    }
  }
  const pms = series.flatMap((s) => s.curve.map((p) => p.pmDbw));
  const vals = series.flatMap((s) => s.curve.map((p) => p.wsee));
  const x = linearScale([Math.min(...pms), Math.max(...pms)], PLOT_X);
  const y = linearScale([0, Math.max(...vals) * 1.05], PLOT_Y);
  const body = series.map((s, i) =>
    seriesGroup(
      s.name,
      polyline(
        s.curve.map((p) => [x(p.pmDbw), y(p.wsee)]),
        PALETTE[i % PALETTE.length],
      ),
    ),
  );
  return document(
    [
      axes(x, y, "P_m [dBW]", "WSEE"),
      ...body,
      legend(series.map((s) => s.name)),
    ].join("\n"),
  );
}

/** Grouped bars of overall mean WSEE, one group per method, one bar per
 * input table; used for transfer and fine-tuning comparisons. */
export function finetuneBarsFigure(
  tables: NamedTable[],
  filter?: string[],
): string {
  const methods = selectMethods(
    tables.flatMap((t) => t.rows),
    filter,
  );
  const means = tables.map((t) =>
    methods.map((m) => {
      const vals = t.rows.filter((r) => r.method === m).map((r) => r.wsee);
      return vals.length > 0
        ? vals.reduce((s, v) => s + v, 0) / vals.length
        : 0;
    }),
  );
  const x = linearScale([0, methods.length], PLOT_X, methods.length);
  const y = linearScale([0, Math.max(...means.flat()) * 1.1], PLOT_Y);
  const groupWidth = (PLOT_X[1] - PLOT_X[0]) / methods.length;
  const barWidth = (groupWidth * 0.8) / tables.length;
  const body = tables.map((t, ti) => {
    const bars = methods.map((_, mi) => {
      const x0 = PLOT_X[0] + mi * groupWidth + groupWidth * 0.1 + ti * barWidth;
      const y0 = y(means[ti][mi]);
      return (
        `<rect x="${x0.toFixed(2)}" y="${y0.toFixed(2)}" ` +
        `width="${(barWidth * 0.95).toFixed(2)}" height="${(PLOT_Y[0] - y0).toFixed(2)}" ` +
        `fill="${PALETTE[ti % PALETTE.length]}"/>`
      );
    });
    return seriesGroup(t.label, bars.join("\n"));
  });
  const labels = methods.map((m, mi) => {
    const cx = PLOT_X[0] + (mi + 0.5) * groupWidth;
    return `<text x="${cx.toFixed(2)}" y="${PLOT_Y[0] + 20}" text-anchor="middle" font-size="11">${m}</text>`;
  });
  const yAxisOnly = [
    `<line x1="${PLOT_X[0]}" y1="${PLOT_Y[0]}" x2="${PLOT_X[1]}" y2="${PLOT_Y[0]}" stroke="black"/>`,
    `<line x1="${PLOT_X[0]}" y1="${PLOT_Y[0]}" x2="${PLOT_X[0]}" y2="${PLOT_Y[1]}" stroke="black"/>`,
    ...y.ticks.map(
      (t) =>
        `<line x1="${PLOT_X[0] - 5}" y1="${y(t)}" x2="${PLOT_X[0]}" y2="${y(t)}" stroke="black"/>` +
        `<text x="${PLOT_X[0] - 8}" y="${y(t) + 4}" text-anchor="end" font-size="11">${t}</text>`,
    ),
    `<text transform="rotate(-90 16 ${(PLOT_Y[0] + PLOT_Y[1]) / 2})" x="16" y="${(PLOT_Y[0] + PLOT_Y[1]) / 2}" text-anchor="middle" font-size="13" class="y-label">WSEE</text>`,
  ].join("\n");
  return document(
    [yAxisOnly, ...labels, ...body, legend(tables.map((t) => t.label))].join("\n"),
  );
}

/** Minimal deterministic SVG assembly: fixed palette, fixed ordering. */

import { ticks as d3ticks } from "d3-array";

export const WIDTH = 640;
export const HEIGHT = 420;
export const MARGIN = { top: 24, right: 24, bottom: 48, left: 64 };

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

export interface LinearScale {
  (x: number): number;
  domain: [number, number];
  range: [number, number];
  ticks: number[];
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
  tickCount = 8,
): LinearScale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((x: number) => r0 + ((x - d0) / span) * (r1 - r0)) as LinearScale;
  scale.domain = domain;
  scale.range = range;
  scale.ticks = d3ticks(d0, d1, tickCount);
  return scale;
}

function fmt(x: number): string {
  return Number.isInteger(x) ? String(x) : x.toPrecision(4);
}

export function axes(
  x: LinearScale,
  y: LinearScale,
  xLabel: string,
  yLabel: string,
): string {
  const [x0, x1] = x.range;
  const [y0, y1] = y.range;
  const parts: string[] = [];
  parts.push(
    `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`,
    `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`,
  );
  for (const t of x.ticks) {
    const px = x(t);
    parts.push(
      `<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="black"/>`,
      `<text x="${px}" y="${y0 + 20}" text-anchor="middle" font-size="11">${fmt(t)}</text>`,
    );
  }
  for (const t of y.ticks) {
    const py = y(t);
    parts.push(
      `<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="black"/>`,
      `<text x="${x0 - 8}" y="${py + 4}" text-anchor="end" font-size="11">${fmt(t)}</text>`,
    );
  }
  const cx = (x0 + x1) / 2;
  const cy = (y0 + y1) / 2;
  parts.push(
    `<text x="${cx}" y="${HEIGHT - 10}" text-anchor="middle" font-size="13" class="x-label">${xLabel}</text>`,
    `<text transform="rotate(-90 16 ${cy})" x="16" y="${cy}" text-anchor="middle" font-size="13" class="y-label">${yLabel}</text>`,
  );
  return parts.join("\n");
}

export function legend(names: string[]): string {
  const items = names.map((name, i) => {
    const yPos = MARGIN.top + 16 * i;
    const color = PALETTE[i % PALETTE.length];
    return (
      `<rect x="${WIDTH - MARGIN.right - 130}" y="${yPos - 9}" width="12" height="12" fill="${color}"/>` +
      `<text x="${WIDTH - MARGIN.right - 112}" y="${yPos + 2}" font-size="12">${name}</text>`
    );
  });
  return `<g class="legend">\n${items.join("\n")}\n</g>`;
}

export function document(body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
    `font-family="sans-serif">\n<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>\n` +
    `${body}\n</svg>\n`
  );
}

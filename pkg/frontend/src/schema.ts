/**
 * Parsing and validation of the versioned results table written by the
 * experiment CLI. The file starts with a "# wsee-results v1" comment
 * line followed by a CSV header:
 *
 *   method,channel,pm_dbw,wsee,time_s,p_0,...,p_{L-1}
 *
 * Anything else is rejected with a diagnosis of the offending columns.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export const RESULTS_SCHEMA = "wsee-results v1";

const FIXED_COLUMNS = ["method", "channel", "pm_dbw", "wsee", "time_s"] as const;

export interface ResultRow {
  method: string;
  channel: number;
  pmDbw: number;
  wsee: number;
  timeS: number;
  powers: number[];
}

export class SchemaError extends Error {}

function diagnoseHeader(header: string[]): string | null {
  const missing = FIXED_COLUMNS.filter((c) => !header.includes(c));
  if (missing.length > 0) {
    return `missing columns: ${missing.join(", ")}`;
  }
  for (let i = 0; i < FIXED_COLUMNS.length; i++) {
    if (header[i] !== FIXED_COLUMNS[i]) {
      return `column ${i} is '${header[i]}', expected '${FIXED_COLUMNS[i]}'`;
    }
  }
  const powers = header.slice(FIXED_COLUMNS.length);
  for (let i = 0; i < powers.length; i++) {
    if (powers[i] !== `p_${i}`) {
      return `power column ${i} is '${powers[i]}', expected 'p_${i}'`;
    }
  }
  if (powers.length === 0) {
    return "no p_<i> power columns";
  }
  return null;
}

export function parseResults(text: string, source = "results"): ResultRow[] {
  const newline = text.indexOf("\n");
  const first = (newline >= 0 ? text.slice(0, newline) : text).trim();
  if (first !== `# ${RESULTS_SCHEMA}`) {
    throw new SchemaError(
      `${source}: first line is '${first}', expected '# ${RESULTS_SCHEMA}'`,
    );
  }
  const body = text.slice(newline + 1);
  const parsed = Papa.parse<string[]>(body.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`${source}: ${parsed.errors[0].message}`);
  }
  const [header, ...records] = parsed.data;
  const problem = diagnoseHeader(header ?? []);
  if (problem !== null) {
    throw new SchemaError(`${source}: ${problem}`);
  }
  const rows: ResultRow[] = [];
  for (const rec of records) {
    if (rec.length !== header.length) {
      throw new SchemaError(
        `${source}: row with ${rec.length} fields, header has ${header.length}`,
      );
    }
    const nums = rec.slice(1).map(Number);
    if (nums.some((x) => Number.isNaN(x))) {
      throw new SchemaError(`${source}: non-numeric value in row '${rec}'`);
    }
    rows.push({
      method: rec[0],
      channel: nums[0],
      pmDbw: nums[1],
      wsee: nums[2],
      timeS: nums[3],
      powers: nums.slice(4),
    });
  }
  return rows;
}

export function loadResults(path: string): ResultRow[] {
  return parseResults(readFileSync(path, "utf-8"), path);
}

export function methodsIn(rows: ResultRow[]): string[] {
  return [...new Set(rows.map((r) => r.method))].sort();
}

/** Mean WSEE per budget, in ascending budget order. */
export function meanCurve(
  rows: ResultRow[],
  method: string,
): { pmDbw: number; wsee: number }[] {
  const byPm = new Map<number, number[]>();
  for (const r of rows) {
    if (r.method !== method) continue;
    const bucket = byPm.get(r.pmDbw);
    if (bucket) bucket.push(r.wsee);
    else byPm.set(r.pmDbw, [r.wsee]);
  }
  return [...byPm.entries()]
    .sort(([a], [b]) => a - b)
    .map(([pmDbw, vals]) => ({
      pmDbw,
      wsee: vals.reduce((s, x) => s + x, 0) / vals.length,
    }));
}

/** Mean WSEE per channel (over all budgets), in channel order. */
export function perChannelMeans(rows: ResultRow[], method: string): number[] {
  const byChannel = new Map<number, number[]>();
  for (const r of rows) {
    if (r.method !== method) continue;
    const bucket = byChannel.get(r.channel);
    if (bucket) bucket.push(r.wsee);
    else byChannel.set(r.channel, [r.wsee]);
  }
  return [...byChannel.entries()]
    .sort(([a], [b]) => a - b)
    .map(([, vals]) => vals.reduce((s, x) => s + x, 0) / vals.length);
}

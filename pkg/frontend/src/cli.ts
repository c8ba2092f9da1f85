#!/usr/bin/env node
/**
 * plotkit render --kind curve --in results.csv --out fig.svg [--methods a,b]
 *
 * Exit codes: 0 rendered; 1 usage or filter error; 2 schema mismatch.
 * milestones and finetune-bars accept --in repeatedly, one series (or
 * bar group) per table, labeled by file basename.
 */

import { writeFileSync } from "node:fs";
import { basename, extname } from "node:path";
import yargs from "yargs";
import {
  curveFigure,
  FIGURE_KINDS,
  FigureKind,
  finetuneBarsFigure,
  histogramFigure,
  milestonesFigure,
  NamedTable,
} from "./figures.js";
import { loadResults, SchemaError } from "./schema.js";

interface RenderArgs {
  kind: FigureKind;
  in: string[];
  out: string;
  methods?: string;
}

function tableLabel(path: string): string {
  return basename(path, extname(path));
}

export function render(args: RenderArgs): string {
  const filter = args.methods
    ?.split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
  if (args.methods !== undefined && (filter === undefined || filter.length === 0)) {
    throw new Error("empty method filter");
  }
  const tables: NamedTable[] = args.in.map((path) => ({
    label: tableLabel(path),
    rows: loadResults(path),
  }));
  switch (args.kind) {
    case "curve":
      if (tables.length !== 1) throw new Error("curve takes exactly one --in");
      return curveFigure(tables[0].rows, filter);
    case "histogram":
      if (tables.length !== 1) throw new Error("histogram takes exactly one --in");
      return histogramFigure(tables[0].rows, filter);
    case "milestones":
      return milestonesFigure(tables, filter);
    case "finetune-bars":
      return finetuneBarsFigure(tables, filter);
  }
}

export function main(argv: string[]): number {
  const parser = yargs(argv)
    .command("render", "render one figure from results tables", (y) =>
      y
        .option("kind", {
          choices: FIGURE_KINDS,
          demandOption: true,
          type: "string",
        })
        .option("in", { demandOption: true, type: "string", array: true })
        .option("out", { demandOption: true, type: "string" })
        .option("methods", { type: "string" }),
    )
    .demandCommand(1)
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    });
  let args;
  try {
    args = parser.parseSync();
    const svg = render({
      kind: args.kind as FigureKind,
      in: args.in as string[],
      out: args.out as string,
      methods: args.methods as string | undefined,
    });
    writeFileSync(args.out as string, svg);
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`error: ${message}\n`);
    return err instanceof SchemaError ? 2 : 1;
  }
  process.stdout.write(`wrote ${args.out}\n`);
  return 0;
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}

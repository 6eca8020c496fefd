#!/usr/bin/env node
/**
 * bichf-plot: render figures from a simulator diagnostic CSV.
 *
 * Usage:
 *   bichf-plot <diag.csv> --figures energy,volume --out DIR [--a VALUE]
 *
 * Each requested figure is written as both <name>.svg and <name>.png in the
 * output directory. SVG output is deterministic: rendering the same CSV
 * twice produces byte-identical files.
 */

import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { join } from "node:path";
import { pathToFileURL } from "node:url";
import { parseDiagCsv } from "./csv.js";
import { buildFigure, FIGURE_NAMES, type FigureName } from "./figures.js";
import { renderChart } from "./svg.js";
import { renderChartPng } from "./png.js";

export interface CliOptions {
  csvPath: string;
  figures: FigureName[];
  outDir: string;
  a: number;
}

export function parseArgs(argv: string[]): CliOptions {
  let csvPath: string | null = null;
  let figures: FigureName[] = [...FIGURE_NAMES];
  let outDir = ".";
  let a = 1.0;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--figures") {
      const value = argv[++i];
      if (value === undefined) {
        throw new Error("--figures requires a value");
      }
      figures = value.split(",").map((name) => {
        if (!(FIGURE_NAMES as readonly string[]).includes(name)) {
          throw new Error(
            `unknown figure ${name} (known: ${FIGURE_NAMES.join(",")})`,
          );
        }
        return name as FigureName;
      });
    } else if (arg === "--out") {
      const value = argv[++i];
      if (value === undefined) {
        throw new Error("--out requires a value");
      }
      outDir = value;
    } else if (arg === "--a") {
      const value = argv[++i];
      if (value === undefined || !Number.isFinite(Number(value))) {
        throw new Error("--a requires a numeric value");
      }
      a = Number(value);
    } else if (arg.startsWith("--")) {
      throw new Error(`unknown option ${arg}`);
    } else if (csvPath === null) {
      csvPath = arg;
    } else {
      throw new Error(`unexpected positional argument ${arg}`);
    }
  }

  if (csvPath === null) {
    throw new Error(
      "usage: bichf-plot <diag.csv> --figures energy,volume --out DIR [--a VALUE]",
    );
  }
  return { csvPath, figures, outDir, a };
}

export function main(argv: string[]): number {
  let opts: CliOptions;
  try {
    opts = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`);
    return 2;
  }

  let table;
  try {
    table = parseDiagCsv(readFileSync(opts.csvPath, "utf8"));
  } catch (err) {
    process.stderr.write(`failed to read ${opts.csvPath}: ${(err as Error).message}\n`);
    return 1;
  }

  mkdirSync(opts.outDir, { recursive: true });
  for (const name of opts.figures) {
    const spec = buildFigure(name, table, opts.a);
    writeFileSync(join(opts.outDir, `${name}.svg`), renderChart(spec));
    writeFileSync(join(opts.outDir, `${name}.png`), renderChartPng(spec));
    process.stdout.write(`wrote ${join(opts.outDir, name)}.{svg,png}\n`);
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}

#!/usr/bin/env node
/**
 * plot_convergence <sweep.csv> <out.svg>
 *
 * Reads a harness sweep table and writes the log-log convergence figure
 * (one panel per metric, error bars, fitted slope annotation).  The output
 * is SVG; exits 0 on success, 1 on malformed input.
 */
import { readFileSync, writeFileSync } from "fs";

import { renderConvergenceFigure } from "./figure";
import { parseSweepCsv, TableError } from "./table";

export function main(argv: string[]): number {
  if (argv.length !== 2) {
    process.stderr.write("usage: plot_convergence <sweep.csv> <out.svg>\n");
    return 1;
  }
  const [inPath, outPath] = argv;
  let text: string;
  try {
    text = readFileSync(inPath, "utf8");
  } catch (err) {
    process.stderr.write(`cannot read ${inPath}: ${String(err)}\n`);
    return 1;
  }
  try {
    const table = parseSweepCsv(text);
    writeFileSync(outPath, renderConvergenceFigure(table));
  } catch (err) {
    if (err instanceof TableError) {
      process.stderr.write(`malformed sweep CSV: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

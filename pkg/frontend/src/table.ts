import { parse } from "papaparse";

export interface SweepRow {
  eps: number;
  metric: string;
  mean: number;
  stderr: number;
  n_replicas: number;
}

export interface SweepTable {
  rows: SweepRow[];
  metrics: string[];
}

const HEADER = ["eps", "metric", "mean", "stderr", "n_replicas"];

export class TableError extends Error {}

/** Parse and validate a sweep.csv produced by the harness. */
export function parseSweepCsv(text: string): SweepTable {
  const parsed = parse<Record<string, unknown>>(text.trim(), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new TableError(`CSV parse error: ${parsed.errors[0].message}`);
  }
  const got = parsed.meta.fields ?? [];
  if (HEADER.some((h, i) => got[i] !== h)) {
    throw new TableError(
      `unexpected header [${got.join(",")}]; expected [${HEADER.join(",")}]`
    );
  }
  const rows: SweepRow[] = [];
  for (const raw of parsed.data) {
    const row: SweepRow = {
      eps: Number(raw.eps),
      metric: String(raw.metric),
      mean: Number(raw.mean),
      stderr: Number(raw.stderr),
      n_replicas: Number(raw.n_replicas),
    };
    if (!Number.isFinite(row.eps) || row.eps <= 0) {
      throw new TableError(`eps must be positive, got ${raw.eps}`);
    }
    if (!Number.isFinite(row.stderr) || row.stderr < 0) {
      throw new TableError(`stderr must be >= 0, got ${raw.stderr}`);
    }
    if (!Number.isFinite(row.mean)) {
      throw new TableError(`mean must be finite, got ${raw.mean}`);
    }
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new TableError("empty sweep table");
  }
  const metrics = [...new Set(rows.map((r) => r.metric))].sort();
  return { rows, metrics };
}

export function metricRows(table: SweepTable, metric: string): SweepRow[] {
  return table.rows
    .filter((r) => r.metric === metric)
    .slice()
    .sort((a, b) => a.eps - b.eps);
}

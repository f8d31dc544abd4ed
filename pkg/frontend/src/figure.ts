import { fitLogLogSlope } from "./fit";
import { metricRows, SweepTable } from "./table";

const PANEL_W = 380;
const PANEL_H = 300;
const MARGIN = { left: 58, right: 16, top: 34, bottom: 42 };

function fmt(v: number): string {
  return Number(v.toPrecision(6)).toString();
}

interface Scale {
  (v: number): number;
}

function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const a = Math.log(lo);
  const b = Math.log(hi);
  const span = b - a || 1;
  return (v: number) => outLo + ((Math.log(v) - a) / span) * (outHi - outLo);
}

function decadeTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.filter((t) => t >= lo / 1.0001 && t <= hi * 1.0001);
}

/** One log-log panel: points, error bars, fitted slope when available. */
function renderPanel(table: SweepTable, metric: string, x0: number, y0: number): string {
  const rows = metricRows(table, metric);
  const xs = rows.map((r) => r.eps);
  const positive = rows.filter((r) => r.mean > 0);
  const ysLo = positive.map((r) => Math.max(r.mean - r.stderr, r.mean / 10));
  const ysHi = positive.map((r) => r.mean + r.stderr);
  const xLo = Math.min(...xs) / 1.3;
  const xHi = Math.max(...xs) * 1.3;
  const yLo = (ysLo.length ? Math.min(...ysLo) : 1e-3) / 1.5;
  const yHi = (ysHi.length ? Math.max(...ysHi) : 1) * 1.5;

  const px = logScale(xLo, xHi, x0 + MARGIN.left, x0 + PANEL_W - MARGIN.right);
  const py = logScale(yLo, yHi, y0 + PANEL_H - MARGIN.bottom, y0 + MARGIN.top);

  const parts: string[] = [];
  parts.push(
    `<rect x="${x0 + MARGIN.left}" y="${y0 + MARGIN.top}" width="${
      PANEL_W - MARGIN.left - MARGIN.right
    }" height="${PANEL_H - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#444"/>`
  );
  parts.push(
    `<text x="${x0 + PANEL_W / 2}" y="${y0 + 18}" text-anchor="middle" font-size="13" fill="#111">${metric}</text>`
  );
  for (const t of decadeTicks(yLo, yHi)) {
    const yy = py(t);
    parts.push(
      `<line x1="${fmt(px(xLo))}" y1="${fmt(yy)}" x2="${fmt(px(xHi))}" y2="${fmt(yy)}" stroke="#ddd"/>`,
      `<text x="${x0 + MARGIN.left - 6}" y="${fmt(yy + 4)}" text-anchor="end" font-size="10" fill="#333">1e${Math.round(Math.log10(t))}</text>`
    );
  }
  for (const t of [...new Set(xs)].sort((a, b) => a - b)) {
    const xx = px(t);
    parts.push(
      `<line x1="${fmt(xx)}" y1="${fmt(py(yLo))}" x2="${fmt(xx)}" y2="${fmt(py(yHi))}" stroke="#eee"/>`,
      `<text x="${fmt(xx)}" y="${y0 + PANEL_H - MARGIN.bottom + 16}" text-anchor="middle" font-size="10" fill="#333">${fmt(t)}</text>`
    );
  }
  parts.push(
    `<text x="${x0 + PANEL_W / 2}" y="${y0 + PANEL_H - 8}" text-anchor="middle" font-size="11" fill="#111">eps</text>`
  );

  const fit = fitLogLogSlope(rows);
  if (fit) {
    const yA = Math.exp(fit.intercept + fit.slope * Math.log(xLo * 1.05));
    const yB = Math.exp(fit.intercept + fit.slope * Math.log(xHi / 1.05));
    parts.push(
      `<line x1="${fmt(px(xLo * 1.05))}" y1="${fmt(py(Math.min(Math.max(yA, yLo), yHi)))}" x2="${fmt(
        px(xHi / 1.05)
      )}" y2="${fmt(py(Math.min(Math.max(yB, yLo), yHi)))}" stroke="#b33" stroke-dasharray="5,3"/>`,
      `<text x="${x0 + PANEL_W - MARGIN.right - 4}" y="${y0 + MARGIN.top + 14}" text-anchor="end" font-size="11" fill="#b33">slope ${fmt(
        Number(fit.slope.toFixed(3))
      )}</text>`
    );
  }

  for (const r of rows) {
    if (r.mean <= 0) continue;
    const xx = px(r.eps);
    if (r.stderr > 0 && r.mean - r.stderr > 0) {
      parts.push(
        `<line x1="${fmt(xx)}" y1="${fmt(py(r.mean - r.stderr))}" x2="${fmt(xx)}" y2="${fmt(
          py(r.mean + r.stderr)
        )}" stroke="#06c" stroke-width="1.2"/>`
      );
    }
    parts.push(`<circle cx="${fmt(xx)}" cy="${fmt(py(r.mean))}" r="3.2" fill="#06c"/>`);
  }
  return parts.join("\n");
}

/** Full figure: one panel per metric, two panels per row, stable bytes. */
export function renderConvergenceFigure(table: SweepTable): string {
  const metrics = table.metrics;
  const cols = Math.min(2, metrics.length);
  const rows = Math.ceil(metrics.length / cols);
  const width = cols * PANEL_W;
  const height = rows * PANEL_H;
  const body = metrics
    .map((m, i) => renderPanel(table, m, (i % cols) * PANEL_W, Math.floor(i / cols) * PANEL_H))
    .join("\n");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica,Arial,sans-serif">\n` +
    `<rect width="${width}" height="${height}" fill="white"/>\n${body}\n</svg>\n`
  );
}

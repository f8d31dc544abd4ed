import { SweepRow } from "./table";

export interface SlopeFit {
  slope: number;
  intercept: number;
  stderr: number;
  points: number;
}

/**
 * Weighted least squares of log(mean) against log(eps).
 *
 * Weights are 1/stderr_log^2 with stderr_log = stderr/mean (the delta
 * method); rows with zero or missing stderr get the median weight so a
 * noise-free synthetic table still fits.  Needs at least two distinct eps
 * and positive means; otherwise returns null (plot a point, no fit).
 */
export function fitLogLogSlope(rows: SweepRow[]): SlopeFit | null {
  const usable = rows.filter((r) => r.mean > 0);
  const eps = [...new Set(usable.map((r) => r.eps))];
  if (eps.length < 2) {
    return null;
  }
  const x = usable.map((r) => Math.log(r.eps));
  const y = usable.map((r) => Math.log(r.mean));
  const relErr = usable.map((r) => (r.stderr > 0 ? r.stderr / r.mean : NaN));
  const finite = relErr.filter((v) => Number.isFinite(v) && v > 0).sort((a, b) => a - b);
  const fallback = finite.length > 0 ? finite[Math.floor(finite.length / 2)] : 1.0;
  const w = relErr.map((v) => {
    const s = Number.isFinite(v) && v > 0 ? v : fallback;
    return 1 / (s * s);
  });

  const sw = w.reduce((a, b) => a + b, 0);
  const mx = x.reduce((a, xi, i) => a + w[i] * xi, 0) / sw;
  const my = y.reduce((a, yi, i) => a + w[i] * yi, 0) / sw;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < x.length; i++) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  if (sxx === 0) {
    return null;
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  return { slope, intercept, stderr: Math.sqrt(1 / sxx), points: x.length };
}

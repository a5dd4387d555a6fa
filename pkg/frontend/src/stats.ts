/**
 * Box-and-whisker statistics under the workbench convention: quartiles by
 * linear interpolation on the sorted sample, whiskers at the most extreme
 * data points within 1.5 IQR of the box, everything beyond as fliers.
 * Must reproduce the harness values exactly — raw trial values plus this
 * convention are the single source of truth for every figure.
 */

export interface BoxStats {
  q1: number;
  median: number;
  q3: number;
  mean: number;
  whiskerLo: number;
  whiskerHi: number;
  fliers: number[];
}

export function quantileLinear(sorted: number[], q: number): number {
  const n = sorted.length;
  if (n === 0) throw new Error("quantile of empty sample");
  const pos = q * (n - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(lo + 1, n - 1);
  const frac = pos - lo;
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

export function boxStats(values: number[]): BoxStats {
  if (values.length === 0) throw new Error("boxStats needs at least one value");
  const sorted = [...values].sort((a, b) => a - b);
  const q1 = quantileLinear(sorted, 0.25);
  const median = quantileLinear(sorted, 0.5);
  const q3 = quantileLinear(sorted, 0.75);
  const iqr = q3 - q1;
  const loLimit = q1 - 1.5 * iqr;
  const hiLimit = q3 + 1.5 * iqr;
  const inside = sorted.filter((v) => v >= loLimit && v <= hiLimit);
  const fliers = sorted.filter((v) => v < loLimit || v > hiLimit);
  let sum = 0;
  for (const v of sorted) sum += v;
  return {
    q1,
    median,
    q3,
    mean: sum / sorted.length,
    whiskerLo: inside[0],
    whiskerHi: inside[inside.length - 1],
    fliers,
  };
}

export function mean(values: number[]): number {
  let sum = 0;
  for (const v of values) sum += v;
  return sum / values.length;
}

/** Least-squares line fit; returns slope, intercept, and R^2. */
export function linearFit(x: number[], y: number[]): { slope: number; intercept: number; r2: number } {
  const n = x.length;
  if (n < 2 || y.length !== n) throw new Error("need two equal-length samples of >= 2 points");
  const mx = mean(x);
  const my = mean(y);
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx === 0) throw new Error("degenerate fit: x values identical");
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  const r2 = syy === 0 ? 1 : (sxy * sxy) / (sxx * syy);
  return { slope, intercept, r2 };
}

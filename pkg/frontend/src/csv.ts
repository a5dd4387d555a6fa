/** Readers for the experiment export schemas (trials.csv, covariance.csv). */
import * as fs from "fs";
import * as path from "path";

export interface TrialRow {
  sweepValue: number;
  trialIndex: number;
  seed: number;
  ate: number;
  rpe: number;
  rho: number;
  divergent: boolean;
}

export type Metric = "ate" | "rpe" | "rho" | "cov_norm";

export const METRICS: Metric[] = ["ate", "rpe", "rho", "cov_norm"];

function parseCsv(file: string): { header: string[]; rows: string[][] } {
  const text = fs.readFileSync(file, "utf-8").trim();
  if (text.length === 0) throw new Error(`${file} is empty`);
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((ln) => ln.split(","));
  return { header, rows };
}

function requireColumn(header: string[], name: string, file: string): number {
  const idx = header.indexOf(name);
  if (idx < 0) throw new Error(`${file} is missing required column '${name}'`);
  return idx;
}

export function readTrials(dir: string): TrialRow[] {
  const file = path.join(dir, "trials.csv");
  const { header, rows } = parseCsv(file);
  const col = {
    sweep: requireColumn(header, "sweep_value", file),
    trial: requireColumn(header, "trial_index", file),
    seed: requireColumn(header, "seed", file),
    ate: requireColumn(header, "ate", file),
    rpe: requireColumn(header, "rpe", file),
    rho: requireColumn(header, "rho", file),
    divergent: requireColumn(header, "divergent", file),
  };
  return rows.map((r) => ({
    sweepValue: Number(r[col.sweep]),
    trialIndex: Number(r[col.trial]),
    seed: Number(r[col.seed]),
    ate: Number(r[col.ate]),
    rpe: Number(r[col.rpe]),
    rho: Number(r[col.rho]),
    divergent: r[col.divergent] === "1",
  }));
}

export interface CovarianceRow {
  t: number;
  sweepValue: number;
  froNorm: number;
}

export function readCovariance(dir: string): CovarianceRow[] {
  const file = path.join(dir, "covariance.csv");
  const { header, rows } = parseCsv(file);
  const col = {
    t: requireColumn(header, "t", file),
    sweep: requireColumn(header, "sweep_value", file),
    fro: requireColumn(header, "fro_norm", file),
  };
  return rows.map((r) => ({
    t: Number(r[col.t]),
    sweepValue: Number(r[col.sweep]),
    froNorm: Number(r[col.fro]),
  }));
}

/**
 * Per-sweep-value sample of the requested metric, in first-appearance
 * order. ATE/RPE/rho distributions are over trials (finite values only);
 * cov_norm is the distribution over time of ||Sigma(t)||_F.
 */
export function metricSamples(dir: string, metric: Metric): Map<number, number[]> {
  const out = new Map<number, number[]>();
  if (metric === "cov_norm") {
    for (const row of readCovariance(dir)) {
      if (!out.has(row.sweepValue)) out.set(row.sweepValue, []);
      out.get(row.sweepValue)!.push(row.froNorm);
    }
    return out;
  }
  for (const row of readTrials(dir)) {
    if (!out.has(row.sweepValue)) out.set(row.sweepValue, []);
    const v = row[metric];
    if (Number.isFinite(v)) out.get(row.sweepValue)!.push(v);
  }
  return out;
}

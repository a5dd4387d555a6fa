#!/usr/bin/env node
/**
 * Figure rendering from experiment export directories.
 *
 *   viomc-plot plot-box   --dir results/ --metric ate --out ate_box.svg
 *   viomc-plot plot-lines --dir results/ --metric ate --loglog --out ate_line.svg
 */
import { METRICS, Metric } from "./csv";
import { renderBoxPlot } from "./boxplot";
import { renderMeanLines } from "./lineplot";

interface Args {
  dir?: string;
  metric?: string;
  out?: string;
  loglog: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { loglog: false };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--dir") args.dir = argv[++i];
    else if (a === "--metric") args.metric = argv[++i];
    else if (a === "--out") args.out = argv[++i];
    else if (a === "--loglog") args.loglog = true;
    else throw new UsageError(`unknown argument: ${a}`);
  }
  return args;
}

class UsageError extends Error {}

function requireArgs(args: Args): { dir: string; metric: Metric; out: string } {
  if (!args.dir) throw new UsageError("--dir is required");
  if (!args.out) throw new UsageError("--out is required");
  if (!args.metric || !METRICS.includes(args.metric as Metric)) {
    throw new UsageError(`--metric must be one of ${METRICS.join(", ")}`);
  }
  return { dir: args.dir, metric: args.metric as Metric, out: args.out };
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "plot-box") {
      const { dir, metric, out } = requireArgs(parseArgs(rest));
      const boxes = renderBoxPlot({ dir, metric, out });
      console.log(`wrote ${out}: ${boxes.length} boxes (${metric})`);
      return 0;
    }
    if (command === "plot-lines") {
      const args = parseArgs(rest);
      const { dir, metric, out } = requireArgs(args);
      const points = renderMeanLines({ dir, metric, out, logLog: args.loglog });
      console.log(`wrote ${out}: ${points.length} mean points (${metric})`);
      return 0;
    }
    throw new UsageError("usage: viomc-plot <plot-box|plot-lines> --dir D --metric M --out F [--loglog]");
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

/**
 * Mean-metric curve versus sweep value, optionally with both axes in log
 * scale (the presentation for the exponential attribution-error trend).
 */
import * as fs from "fs";

import { Metric, metricSamples } from "./csv";
import { mean } from "./stats";
import { SvgDoc, formatTick, linearTicks } from "./svg";

export interface LinePlotSpec {
  dir: string;
  metric: Metric;
  out: string;
  logLog?: boolean;
  axisLabel?: string;
  width?: number;
  height?: number;
}

export interface LinePoint {
  sweepValue: number;
  mean: number;
}

const MARGIN = { left: 64, right: 18, top: 28, bottom: 44 };

export function renderMeanLines(spec: LinePlotSpec): LinePoint[] {
  const samples = metricSamples(spec.dir, spec.metric);
  const points: LinePoint[] = [];
  for (const [value, xs] of samples) {
    if (xs.length === 0) continue;
    points.push({ sweepValue: value, mean: mean(xs) });
  }
  points.sort((a, b) => a.sweepValue - b.sweepValue);
  if (spec.logLog) {
    const bad = points.filter((p) => !(p.sweepValue > 0) || !(p.mean > 0));
    if (bad.length > 0) {
      throw new Error(
        `log-log axes need positive values; offending sweep values: ${bad
          .map((p) => p.sweepValue)
          .join(", ")}`
      );
    }
  }
  if (points.length < 2) throw new Error("need at least 2 sweep values to draw a line");

  const tx = (v: number) => (spec.logLog ? Math.log10(v) : v);
  const xs = points.map((p) => tx(p.sweepValue));
  const ys = points.map((p) => tx(p.mean));
  let [xlo, xhi] = [Math.min(...xs), Math.max(...xs)];
  let [ylo, yhi] = [Math.min(...ys), Math.max(...ys)];
  if (xlo === xhi) [xlo, xhi] = [xlo - 0.5, xhi + 0.5];
  if (ylo === yhi) [ylo, yhi] = [ylo - 0.5, yhi + 0.5];
  const padX = 0.05 * (xhi - xlo);
  const padY = 0.08 * (yhi - ylo);
  xlo -= padX;
  xhi += padX;
  ylo -= padY;
  yhi += padY;

  const width = spec.width ?? 460;
  const height = spec.height ?? 320;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const px = (v: number) => MARGIN.left + (plotW * (v - xlo)) / (xhi - xlo);
  const py = (v: number) => MARGIN.top + plotH * (1 - (v - ylo) / (yhi - ylo));

  const doc = new SvgDoc(width, height);
  doc.line(MARGIN.left, MARGIN.top, MARGIN.left, MARGIN.top + plotH);
  doc.line(MARGIN.left, MARGIN.top + plotH, MARGIN.left + plotW, MARGIN.top + plotH);

  const tickLabel = (v: number) => (spec.logLog ? formatTick(Math.pow(10, v)) : formatTick(v));
  for (const t of linearTicks(ylo, yhi)) {
    doc.line(MARGIN.left - 4, py(t), MARGIN.left, py(t));
    doc.text(MARGIN.left - 7, py(t) + 3.5, tickLabel(t), 10, "end");
  }
  for (const t of linearTicks(xlo, xhi)) {
    doc.line(px(t), MARGIN.top + plotH, px(t), MARGIN.top + plotH + 4);
    doc.text(px(t), MARGIN.top + plotH + 16, tickLabel(t), 10);
  }

  doc.polyline(points.map((p) => [px(tx(p.sweepValue)), py(tx(p.mean))]));
  for (const p of points) {
    doc.circle(px(tx(p.sweepValue)), py(tx(p.mean)), 3, "#1f77b4", "#1f77b4");
  }
  const label = spec.axisLabel ?? `mean ${spec.metric}`;
  doc.text(14, MARGIN.top - 10, spec.logLog ? `${label} (log-log)` : label, 12, "start");
  doc.text(MARGIN.left + plotW / 2, height - 8, "sweep value", 11);

  fs.writeFileSync(spec.out, doc.render());
  return points;
}

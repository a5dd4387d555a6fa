/**
 * Box-and-whisker figure: one box per sweep value on a shared vertical
 * scale. Boxes span the quartiles with the median as a line and the mean
 * as a triangle; whiskers extend to the most extreme points within 1.5 IQR
 * of the box; everything beyond is drawn as a flier circle.
 */
import * as fs from "fs";

import { Metric, metricSamples } from "./csv";
import { BoxStats, boxStats } from "./stats";
import { SvgDoc, formatTick, linearTicks } from "./svg";

export interface BoxPlotSpec {
  dir: string;
  metric: Metric;
  out: string;
  axisLabel?: string;
  width?: number;
  height?: number;
}

export interface RenderedBox {
  sweepValue: number;
  stats: BoxStats;
}

const MARGIN = { left: 62, right: 16, top: 28, bottom: 42 };

export function renderBoxPlot(spec: BoxPlotSpec): RenderedBox[] {
  const samples = metricSamples(spec.dir, spec.metric);
  if (samples.size === 0) throw new Error(`no data for metric '${spec.metric}' in ${spec.dir}`);
  const boxes: RenderedBox[] = [];
  for (const [value, xs] of samples) {
    if (xs.length === 0) continue;
    boxes.push({ sweepValue: value, stats: boxStats(xs) });
  }

  const width = spec.width ?? Math.max(420, 90 * boxes.length + MARGIN.left + MARGIN.right);
  const height = spec.height ?? 320;
  const doc = new SvgDoc(width, height);

  let lo = Infinity;
  let hi = -Infinity;
  for (const b of boxes) {
    lo = Math.min(lo, b.stats.whiskerLo, ...b.stats.fliers);
    hi = Math.max(hi, b.stats.whiskerHi, ...b.stats.fliers);
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const y = (v: number) => MARGIN.top + plotH * (1 - (v - lo) / (hi - lo));
  const slot = plotW / boxes.length;
  const boxW = Math.min(46, slot * 0.5);

  doc.line(MARGIN.left, MARGIN.top, MARGIN.left, MARGIN.top + plotH);
  doc.line(MARGIN.left, MARGIN.top + plotH, MARGIN.left + plotW, MARGIN.top + plotH);
  for (const tick of linearTicks(lo, hi)) {
    doc.line(MARGIN.left - 4, y(tick), MARGIN.left, y(tick));
    doc.text(MARGIN.left - 7, y(tick) + 3.5, formatTick(tick), 10, "end");
  }
  doc.text(14, MARGIN.top - 10, spec.axisLabel ?? spec.metric, 12, "start");

  boxes.forEach((b, i) => {
    const cx = MARGIN.left + slot * (i + 0.5);
    const s = b.stats;
    doc.rect(cx - boxW / 2, y(s.q3), boxW, y(s.q1) - y(s.q3), "none", "#1f77b4");
    doc.line(cx - boxW / 2, y(s.median), cx + boxW / 2, y(s.median), "#d62728", 1.5);
    // whiskers with caps
    doc.line(cx, y(s.q3), cx, y(s.whiskerHi));
    doc.line(cx, y(s.q1), cx, y(s.whiskerLo));
    doc.line(cx - boxW / 4, y(s.whiskerHi), cx + boxW / 4, y(s.whiskerHi));
    doc.line(cx - boxW / 4, y(s.whiskerLo), cx + boxW / 4, y(s.whiskerLo));
    // mean triangle
    const my = y(s.mean);
    doc.polygon(
      [
        [cx, my - 4],
        [cx - 4, my + 3],
        [cx + 4, my + 3],
      ],
      "#2ca02c"
    );
    for (const f of s.fliers) {
      doc.circle(cx, y(f), 2.2, "none", "#555");
    }
    doc.text(cx, MARGIN.top + plotH + 16, formatTick(b.sweepValue), 10);
  });
  doc.text(MARGIN.left + plotW / 2, height - 8, "sweep value", 11);

  fs.writeFileSync(spec.out, doc.render());
  return boxes;
}

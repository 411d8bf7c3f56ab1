/** Cross-section line plot with axes, ticks and a swatch legend. */

import { Raster, textWidth, type Color } from "./raster.js";

export interface Series {
  label: string;
  y: number[];
  color: Color;
  thick?: number;
}

const WIDTH = 560;
const HEIGHT = 340;
const MARGIN = { left: 64, right: 16, top: 28, bottom: 36 };

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (hi === lo) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count + 1) ?? 10 * step;
  const start = Math.ceil(lo / chosen) * chosen;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += chosen) ticks.push(v);
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 1000) return parseFloat(v.toPrecision(3)).toString();
  return v.toExponential(1);
}

export function renderLinePlot(t: number[], series: Series[], title: string): Raster {
  const raster = new Raster(WIDTH, HEIGHT);
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;

  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const v of s.y) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!isFinite(lo) || !isFinite(hi)) throw new Error("no finite values to plot");
  if (hi === lo) {
    hi = lo + 1;
    lo -= 1;
  }
  const pad = 0.06 * (hi - lo);
  lo -= pad;
  hi += pad;
  const tLo = Math.min(...t);
  const tHi = Math.max(...t);

  const px = (x: number) => MARGIN.left + ((x - tLo) / (tHi - tLo)) * plotW;
  const py = (y: number) => MARGIN.top + ((hi - y) / (hi - lo)) * plotH;

  // frame and ticks
  const axis: Color = [60, 60, 60];
  raster.line(MARGIN.left, MARGIN.top, MARGIN.left, MARGIN.top + plotH, axis);
  raster.line(MARGIN.left, MARGIN.top + plotH, MARGIN.left + plotW, MARGIN.top + plotH, axis);
  for (const tick of niceTicks(tLo, tHi)) {
    const x = px(tick);
    raster.line(x, MARGIN.top + plotH, x, MARGIN.top + plotH + 4, axis);
    raster.text(x - textWidth(fmt(tick)) / 2, MARGIN.top + plotH + 8, fmt(tick), axis);
  }
  for (const tick of niceTicks(lo, hi)) {
    const y = py(tick);
    raster.line(MARGIN.left - 4, y, MARGIN.left, y, axis);
    raster.text(MARGIN.left - 8 - textWidth(fmt(tick)), y - 3, fmt(tick), axis);
    raster.line(MARGIN.left, y, MARGIN.left + plotW, y, [235, 235, 235]);
  }

  for (const s of series) {
    for (let i = 1; i < t.length; i++) {
      raster.line(px(t[i - 1]), py(s.y[i - 1]), px(t[i]), py(s.y[i]), s.color, s.thick ?? 1);
    }
  }

  raster.text(MARGIN.left, 8, title, [40, 40, 40]);
  let lx = MARGIN.left + plotW - series.reduce((w, s) => Math.max(w, textWidth(s.label) + 26), 0);
  let ly = MARGIN.top + 6;
  for (const s of series) {
    raster.fillRect(lx, ly + 1, 18, 4, s.color);
    raster.text(lx + 24, ly, s.label, [40, 40, 40]);
    ly += 12;
  }
  return raster;
}

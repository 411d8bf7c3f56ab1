/** Small viridis-style colormap shared by every panel of a figure. */

import type { Color } from "./raster.js";

const STOPS: Color[] = [
  [68, 1, 84],
  [70, 50, 127],
  [54, 92, 141],
  [39, 127, 142],
  [31, 161, 135],
  [74, 194, 109],
  [159, 218, 58],
  [253, 231, 37],
];

export function colorAt(t: number): Color {
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(pos));
  const frac = pos - i;
  const a = STOPS[i];
  const b = STOPS[i + 1];
  return [
    Math.round(a[0] + frac * (b[0] - a[0])),
    Math.round(a[1] + frac * (b[1] - a[1])),
    Math.round(a[2] + frac * (b[2] - a[2])),
  ];
}

export interface ColorScale {
  lo: number;
  hi: number;
}

/** One scale across all fields so panels are visually comparable. */
export function sharedScale(fields: number[][]): ColorScale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const values of fields) {
    for (const v of values) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!isFinite(lo) || !isFinite(hi)) throw new Error("no finite values to scale");
  if (hi === lo) hi = lo + 1; // flat fields (zero phantom) render mid-scale
  return { lo, hi };
}

export function mapColor(value: number, scale: ColorScale): Color {
  return colorAt((value - scale.lo) / (scale.hi - scale.lo));
}

/** Disk-field heatmap panels rendered by nearest-node lookup. */

import { ColorScale, mapColor } from "./colormap.js";
import type { NodeField } from "./data.js";
import { Raster, textWidth } from "./raster.js";

const PANEL = 220;
const TITLE = 14;
const GAP = 10;
const COLORBAR = 46;

class NodeIndex {
  private buckets = new Map<string, number[]>();
  private cell: number;

  constructor(private xs: number[], private ys: number[]) {
    this.cell = Math.max(2 * Math.sqrt(Math.PI / xs.length), 1e-3);
    for (let i = 0; i < xs.length; i++) {
      const key = this.key(xs[i], ys[i]);
      const bucket = this.buckets.get(key);
      if (bucket) bucket.push(i);
      else this.buckets.set(key, [i]);
    }
  }

  private key(x: number, y: number): string {
    return `${Math.floor(x / this.cell)},${Math.floor(y / this.cell)}`;
  }

  nearest(x: number, y: number): number {
    const cx = Math.floor(x / this.cell);
    const cy = Math.floor(y / this.cell);
    let best = -1;
    let bestD = Infinity;
    for (let ring = 0; ring < 6 && best < 0; ring++) {
      for (let ox = -ring; ox <= ring; ox++) {
        for (let oy = -ring; oy <= ring; oy++) {
          if (Math.max(Math.abs(ox), Math.abs(oy)) !== ring) continue;
          const bucket = this.buckets.get(`${cx + ox},${cy + oy}`);
          if (!bucket) continue;
          for (const i of bucket) {
            const d = (this.xs[i] - x) ** 2 + (this.ys[i] - y) ** 2;
            if (d < bestD) {
              bestD = d;
              best = i;
            }
          }
        }
      }
      // after the first ring containing nodes, scan one more ring for safety
      if (best >= 0 && ring > 0) break;
    }
    return best;
  }
}

function drawPanel(raster: Raster, x0: number, y0: number, field: NodeField,
                   index: NodeIndex, values: number[], scale: ColorScale,
                   title: string): void {
  raster.text(x0 + Math.max(0, (PANEL - textWidth(title)) / 2), y0 + 3, title, [40, 40, 40]);
  const top = y0 + TITLE;
  for (let py = 0; py < PANEL; py++) {
    for (let px = 0; px < PANEL; px++) {
      const x = ((px + 0.5) / PANEL) * 2.08 - 1.04;
      const y = 1.04 - ((py + 0.5) / PANEL) * 2.08;
      if (x * x + y * y > 1.0) continue;
      const i = index.nearest(x, y);
      if (i < 0) continue;
      raster.set(x0 + px, top + py, mapColor(values[i], scale));
    }
  }
}

function drawColorbar(raster: Raster, x0: number, y0: number, scale: ColorScale): void {
  const height = PANEL;
  for (let py = 0; py < height; py++) {
    const value = scale.hi - (py / (height - 1)) * (scale.hi - scale.lo);
    const color = mapColor(value, scale);
    for (let px = 0; px < 12; px++) raster.set(x0 + px, y0 + py, color);
  }
  raster.text(x0 + 15, y0, scale.hi.toPrecision(3), [40, 40, 40]);
  raster.text(x0 + 15, y0 + height - 8, scale.lo.toPrecision(3), [40, 40, 40]);
}

export interface PanelSpec {
  title: string;
  values: number[];
}

/** One row of disk heatmaps on a shared color scale, plus a colorbar. */
export function renderHeatmapGrid(field: NodeField, panels: PanelSpec[],
                                  scale: ColorScale): Raster {
  const width = GAP + panels.length * (PANEL + GAP) + COLORBAR + GAP;
  const height = TITLE + PANEL + 2 * GAP;
  const raster = new Raster(width, height);
  const index = new NodeIndex(field.x, field.y);
  panels.forEach((panel, i) => {
    drawPanel(raster, GAP + i * (PANEL + GAP), GAP, field, index,
              panel.values, scale, panel.title);
  });
  drawColorbar(raster, GAP + panels.length * (PANEL + GAP), GAP + TITLE, scale);
  return raster;
}

/** Renders the reconstruction figure set from a completed run directory.
 *
 * Usage: node dist/render.js <run_dir> <out_dir> [--orders 1,2,4]
 *
 * Emits heatmap_panels.png (truth, projection, per-order reconstructions on
 * one shared color scale) and cross_section.png (truth, projection and the
 * highest requested order along the configured chord).  Refuses run
 * directories whose artifacts carry mismatched configuration hashes.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { sharedScale } from "./colormap.js";
import { loadCrossSection, loadFieldCsv, loadRun, orderColumn, requireOrders } from "./data.js";
import { renderHeatmapGrid, type PanelSpec } from "./heatmap.js";
import { renderLinePlot, type Series } from "./lineplot.js";
import type { Color } from "./raster.js";

const ORDER_COLORS: Color[] = [
  [214, 96, 40],
  [190, 60, 120],
  [120, 60, 190],
  [214, 40, 40],
];

export interface RenderResult {
  heatmapPath: string;
  crossSectionPath: string;
}

export function renderReconstruction(runDir: string, outDir: string,
                                     orders?: number[]): RenderResult {
  const diagnostics = loadRun(runDir);
  const wanted = orders && orders.length > 0
    ? [...orders].sort((a, b) => a - b)
    : Array.from({ length: diagnostics.orders_computed }, (_, i) => i + 1);
  requireOrders(diagnostics, wanted);
  const degree = Math.max(...diagnostics.degrees);

  const truth = loadFieldCsv(join(runDir, diagnostics.files.truth));
  const projection = loadFieldCsv(join(runDir, diagnostics.files.projection));
  const orderFields = wanted.map((m) =>
    loadFieldCsv(join(runDir, `recon_order_${m}.csv`)));

  const panels: PanelSpec[] = [
    { title: "truth", values: truth.values[`truth_degree_${degree}`] },
    { title: "projection", values: projection.values[`projection_degree_${degree}`] },
    ...wanted.map((m, i) => ({
      title: `order ${m}`,
      values: orderFields[i].values[orderColumn(m, degree)],
    })),
  ];
  const scale = sharedScale(panels.map((p) => p.values));

  mkdirSync(outDir, { recursive: true });
  const heatmapPath = join(outDir, "heatmap_panels.png");
  writeFileSync(heatmapPath, renderHeatmapGrid(truth, panels, scale).toPng());

  const section = loadCrossSection(join(runDir, diagnostics.files.cross_section));
  const series: Series[] = [
    { label: "truth", y: section.columns[`truth_degree_${degree}`], color: [30, 30, 30], thick: 2 },
    { label: "projection", y: section.columns[`projection_degree_${degree}`], color: [44, 110, 212] },
  ];
  wanted.forEach((m, i) => {
    series.push({
      label: `order ${m}`,
      y: section.columns[orderColumn(m, degree)],
      color: ORDER_COLORS[i % ORDER_COLORS.length],
      thick: m === wanted[wanted.length - 1] ? 2 : 1,
    });
  });
  const crossSectionPath = join(outDir, "cross_section.png");
  writeFileSync(crossSectionPath,
                renderLinePlot(section.t, series, "cross section").toPng());
  return { heatmapPath, crossSectionPath };
}

function main(argv: string[]): number {
  const positional: string[] = [];
  let orders: number[] | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--orders") {
      orders = argv[++i].split(",").map(Number);
    } else {
      positional.push(argv[i]);
    }
  }
  if (positional.length !== 2) {
    console.error("usage: render.js <run_dir> <out_dir> [--orders 1,2,4]");
    return 1;
  }
  try {
    const result = renderReconstruction(positional[0], positional[1], orders);
    console.log(`wrote ${result.heatmapPath}`);
    console.log(`wrote ${result.crossSectionPath}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("render.js")) {
  process.exit(main(process.argv.slice(2)));
}

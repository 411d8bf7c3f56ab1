/** Formats persisted bound reports as a markdown table.
 *
 * Usage: node dist/bounds_table.js <run_dir> <out_file>
 *
 * With a sweep.json in the run directory the table has one row per source
 * strength; otherwise it is the one-row table of the run's bounds.json.
 */

import { existsSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { readJson } from "./data.js";

function sci(v: number | null): string {
  return v === null || v === undefined ? "-" : v.toExponential(4);
}

export function boundsTableMarkdown(runDir: string): string {
  const sweepPath = join(runDir, "sweep.json");
  if (existsSync(sweepPath)) {
    const sweep = readJson(sweepPath);
    const rows: any[] = sweep.rows;
    if (!rows || rows.length === 0) {
      throw new Error(`sweep in ${runDir} has no rows`);
    }
    const lines = [
      "| g0 | nu0 | pinv norm | C | r |",
      "| --- | --- | --- | --- | --- |",
    ];
    for (const row of rows) {
      lines.push(`| ${row.g0} | ${sci(row.nu0)} | ${sci(row.k1_norm)} | ${sci(row.C)} | ${sci(row.r)} |`);
    }
    return lines.join("\n") + "\n";
  }
  const doc = readJson(join(runDir, "bounds.json"));
  const report = doc.report;
  const lines = [
    "| quantity | value |",
    "| --- | --- |",
    `| mu (max over k) | ${sci(report.mu_max)} |`,
    ...Object.entries(report.mu_by_k).map(([k, v]) => `| mu (k=${k}) | ${sci(v as number)} |`),
    `| nu0 | ${sci(report.nu0)} |`,
    `| nu | ${sci(report.nu)} |`,
    `| K | ${sci(report.K)} |`,
    `| forward radius | ${sci(report.forward_radius)} |`,
    `| pinv norm | ${sci(report.k1pinv_norm)} |`,
    `| C | ${sci(report.C)} |`,
    `| r | ${sci(report.r)} |`,
    `| M threshold | ${sci(report.m_bound)} |`,
  ];
  if (doc.data_check) {
    lines.push(`| data sup after pinv | ${sci(doc.data_check.k1phi_norm)} |`);
    lines.push(`| small-data hypothesis | ${doc.data_check.hypothesis_ok ? "holds" : "fails"} |`);
  }
  return lines.join("\n") + "\n";
}

function main(argv: string[]): number {
  if (argv.length !== 2) {
    console.error("usage: bounds_table.js <run_dir> <out_file>");
    return 1;
  }
  try {
    const markdown = boundsTableMarkdown(argv[0]);
    writeFileSync(argv[1], markdown);
    console.log(`wrote ${argv[1]}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("bounds_table.js")) {
  process.exit(main(process.argv.slice(2)));
}

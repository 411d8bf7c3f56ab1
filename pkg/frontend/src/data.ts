/** Loaders for run-directory artifacts with config-hash verification. */

import { readFileSync } from "node:fs";
import { join } from "node:path";

export interface NodeField {
  x: number[];
  y: number[];
  values: Record<string, number[]>;
}

export interface CrossSection {
  t: number[];
  columns: Record<string, number[]>;
}

export interface Diagnostics {
  config_hash: string;
  orders_computed: number;
  degrees: number[];
  correction_norms: number[];
  diverged_at: number | null;
  projection_distance: number;
  files: {
    truth: string;
    projection: string;
    orders: string[];
    corrections: string[];
    cross_section: string;
  };
}

export class HashMismatchError extends Error {}
export class MissingOrderError extends Error {}

export function readJson(path: string): any {
  return JSON.parse(readFileSync(path, "utf8"));
}

function parseNumericCsv(path: string): { header: string[]; rows: number[][] } {
  const lines = readFileSync(path, "utf8").trim().split("\n");
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line) => line.split(",").map(Number));
  return { header, rows };
}

export function loadFieldCsv(path: string): NodeField {
  const { header, rows } = parseNumericCsv(path);
  if (header[0] !== "node" || header[1] !== "x" || header[2] !== "y") {
    throw new Error(`${path} is not a field file (header ${header.slice(0, 3).join(",")})`);
  }
  const field: NodeField = { x: [], y: [], values: {} };
  for (const name of header.slice(3)) field.values[name] = [];
  for (const row of rows) {
    field.x.push(row[1]);
    field.y.push(row[2]);
    header.slice(3).forEach((name, i) => field.values[name].push(row[3 + i]));
  }
  return field;
}

export function loadCrossSection(path: string): CrossSection {
  const { header, rows } = parseNumericCsv(path);
  if (header[0] !== "t") throw new Error(`${path} is not a cross-section file`);
  const section: CrossSection = { t: [], columns: {} };
  for (const name of header.slice(1)) section.columns[name] = [];
  for (const row of rows) {
    section.t.push(row[0]);
    header.slice(1).forEach((name, i) => section.columns[name].push(row[1 + i]));
  }
  return section;
}

/**
 * Load diagnostics and verify that every hash-stamped artifact in the run
 * directory was produced by the same configuration.
 */
export function loadRun(runDir: string): Diagnostics {
  const diagnostics = readJson(join(runDir, "diagnostics.json")) as Diagnostics;
  const hash = diagnostics.config_hash;
  for (const name of ["config.json", "data.json", "bounds.json"]) {
    let doc: any;
    try {
      doc = readJson(join(runDir, name));
    } catch {
      continue; // artifact not present in this run directory
    }
    if (doc.config_hash !== hash) {
      throw new HashMismatchError(
        `${name} carries config hash ${doc.config_hash}, diagnostics carry ${hash}`,
      );
    }
  }
  return diagnostics;
}

/** Column name of the reconstruction field for an order/degree pair. */
export function orderColumn(order: number, degree: number): string {
  return `order_${order}_degree_${degree}`;
}

export function requireOrders(diagnostics: Diagnostics, orders: number[]): void {
  for (const m of orders) {
    if (m < 1 || m > diagnostics.orders_computed) {
      throw new MissingOrderError(
        `order ${m} not present (run computed orders 1..${diagnostics.orders_computed})`,
      );
    }
  }
}

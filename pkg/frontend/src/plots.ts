import { mkdirSync, writeFileSync } from "fs";
import { dirname } from "path";

import { loadTables, runLabel } from "./parse.js";
import { ExperimentTable, SchemaError, ValidationError } from "./schema.js";
import { Series, lineChart } from "./svg.js";

function write(outPath: string, svg: string): void {
  mkdirSync(dirname(outPath), { recursive: true });
  writeFileSync(outPath, svg, "utf-8");
}

/** Group one sweep-style value per (aggregator, byz percentage). */
function sweepSeries(
  tables: ExperimentTable[],
  pick: (table: ExperimentTable) => number,
): Series[] {
  const byAggregator = new Map<string, Map<number, number>>();
  const seen = new Set<string>();
  for (const table of tables) {
    const row = table.summary ?? table.rounds[table.rounds.length - 1];
    const key = `${row.aggregator}|${row.byzFraction}|${row.alpha}`;
    if (seen.has(key)) {
      throw new ValidationError(`${table.source}: duplicate sweep point (${key})`);
    }
    seen.add(key);
    if (!byAggregator.has(row.aggregator)) {
      byAggregator.set(row.aggregator, new Map());
    }
    byAggregator.get(row.aggregator)!.set(row.byzFraction * 100, pick(table));
  }
  if (![...byAggregator.values()].some((points) => points.size >= 2)) {
    throw new ValidationError(
      "a sweep needs at least two byzantine-fraction points for at least one aggregator");
  }
  return [...byAggregator.keys()].sort().map((name) => ({
    name,
    points: [...byAggregator.get(name)!.entries()].sort((a, b) => a[0] - b[0]),
  }));
}

/** Final-round accuracy per aggregator versus byzantine percentage. */
export function plotAccuracySweep(inputs: string[], outPath: string): string {
  const tables = loadTables(inputs);
  const series = sweepSeries(tables, (t) => t.rounds[t.rounds.length - 1].accuracy);
  const svg = lineChart({
    title: "Final accuracy vs Byzantine percentage",
    xLabel: "Byzantine clients (%)",
    yLabel: "Final-round accuracy",
    series,
    yDomain: [0, 1],
  });
  write(outPath, svg);
  return svg;
}

/** Average error rate (from the summary rows) versus byzantine percentage. */
export function plotAerSweep(inputs: string[], outPath: string): string {
  const tables = loadTables(inputs);
  const series = sweepSeries(tables, (table) => {
    if (table.summary === null || table.summary.aer === null) {
      throw new SchemaError(`${table.source}: no summary row carrying the AER`);
    }
    const aer = table.summary.aer;
    if (aer < 0 || aer > 1) {
      throw new ValidationError(`${table.source}: AER ${aer} outside [0, 1]`);
    }
    return aer;
  });
  const svg = lineChart({
    title: "Average error rate vs Byzantine percentage",
    xLabel: "Byzantine clients (%)",
    yLabel: "AER",
    series,
    yDomain: [0, 1],
  });
  write(outPath, svg);
  return svg;
}

/** Per-round accuracy, one line per input run. No smoothing. */
export function plotConvergence(inputs: string[], outPath: string): string {
  const tables = loadTables(inputs);
  const series: Series[] = tables.map((table) => ({
    name: runLabel(table),
    points: table.rounds.map((row) => [row.round, row.accuracy] as [number, number]),
  }));
  const svg = lineChart({
    title: "Accuracy per round",
    xLabel: "Round",
    yLabel: "Test accuracy",
    series,
    yDomain: [0, 1],
  });
  write(outPath, svg);
  return svg;
}

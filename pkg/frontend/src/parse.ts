import { readFileSync, readdirSync, statSync } from "fs";
import { basename, join } from "path";

import {
  ATTACK_KINDS,
  CSV_COLUMNS,
  ExperimentTable,
  RoundRow,
  SchemaError,
  ValidationError,
} from "./schema.js";

function parseNumber(raw: string, column: string, source: string): number {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value)) {
    throw new SchemaError(`${source}: column ${column} holds ${JSON.stringify(raw)}, expected a number`);
  }
  return value;
}

/** Parse one experiment CSV. Lines starting with '#' (the timestamp header)
 *  are ignored; the column header must carry the full simulator schema. */
export function parseExperimentCsv(text: string, source: string): ExperimentTable {
  const lines = text
    .split(/\r?\n/)
    .filter((line) => line.trim() !== "" && !line.startsWith("#"));
  if (lines.length === 0) {
    throw new SchemaError(`${source}: no rows`);
  }
  const header = lines[0].split(",");
  for (const column of CSV_COLUMNS) {
    if (!header.includes(column)) {
      throw new SchemaError(`${source}: missing column ${column}`);
    }
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const at = (cells: string[], column: string) => cells[index.get(column)!] ?? "";

  const rounds: RoundRow[] = [];
  let summary: RoundRow | null = null;
  const seenRounds = new Set<number>();
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(`${source}: row has ${cells.length} cells, header has ${header.length}`);
    }
    const round = parseNumber(at(cells, "round"), "round", source);
    const mistaken: Record<string, number> = {};
    for (const kind of ATTACK_KINDS) {
      mistaken[kind] = parseNumber(at(cells, `mistaken_${kind}`), `mistaken_${kind}`, source);
    }
    const aerCell = at(cells, "aer").trim();
    const row: RoundRow = {
      round,
      aggregator: at(cells, "aggregator"),
      byzFraction: parseNumber(at(cells, "byz_fraction"), "byz_fraction", source),
      alpha: parseNumber(at(cells, "alpha"), "alpha", source),
      accuracy: parseNumber(at(cells, "accuracy"), "accuracy", source),
      nB: parseNumber(at(cells, "n_b"), "n_b", source),
      nM: parseNumber(at(cells, "n_m"), "n_m", source),
      selectedCount: parseNumber(at(cells, "selected_count"), "selected_count", source),
      mistaken,
      aer: aerCell === "" ? null : parseNumber(aerCell, "aer", source),
    };
    if (round === -1) {
      if (summary !== null) {
        throw new ValidationError(`${source}: more than one summary row`);
      }
      summary = row;
    } else {
      if (seenRounds.has(round)) {
        throw new ValidationError(`${source}: duplicate row for round ${round}`);
      }
      seenRounds.add(round);
      rounds.push(row);
    }
  }
  if (rounds.length === 0) {
    throw new SchemaError(`${source}: no per-round rows`);
  }
  rounds.sort((a, b) => a.round - b.round);
  return { source, rounds, summary };
}

export function readExperimentCsv(path: string): ExperimentTable {
  return parseExperimentCsv(readFileSync(path, "utf-8"), path);
}

/** Expand a mix of directories and files into parsed tables. Directories
 *  contribute their *.csv entries in sorted order so output is stable. */
export function loadTables(inputs: string[]): ExperimentTable[] {
  const files: string[] = [];
  for (const input of inputs) {
    if (statSync(input).isDirectory()) {
      const entries = readdirSync(input)
        .filter((name) => name.endsWith(".csv"))
        .sort();
      files.push(...entries.map((name) => join(input, name)));
    } else {
      files.push(input);
    }
  }
  if (files.length === 0) {
    throw new SchemaError(`no CSV files found under: ${inputs.join(", ")}`);
  }
  return files.map(readExperimentCsv);
}

export function runLabel(table: ExperimentTable): string {
  return basename(table.source).replace(/\.csv$/, "");
}

/** The experiment CSV schema written by the simulator, one row per round
 *  plus a summary row with round = -1 carrying totals and the AER. */

export const ATTACK_KINDS = [
  "label_flip",
  "backdoor",
  "sign_flip",
  "random_params",
  "bit_flip",
  "lie",
  "krum_scale",
] as const;

export const CSV_COLUMNS = [
  "round",
  "aggregator",
  "byz_fraction",
  "alpha",
  "accuracy",
  "n_b",
  "n_m",
  "selected_count",
  ...ATTACK_KINDS.map((k) => `mistaken_${k}`),
  "aer",
];

export interface RoundRow {
  round: number;
  aggregator: string;
  byzFraction: number;
  alpha: number;
  accuracy: number;
  nB: number;
  nM: number;
  selectedCount: number;
  mistaken: Record<string, number>;
  aer: number | null; // only filled on the summary row
}

/** One parsed CSV: its per-round rows plus the optional summary row. */
export interface ExperimentTable {
  source: string; // file path the rows came from
  rounds: RoundRow[];
  summary: RoundRow | null;
}

/** A column is missing, a file is empty, or a row is malformed. */
export class SchemaError extends Error {}

/** Parsed values violate an invariant (AER outside [0, 1], duplicates). */
export class ValidationError extends Error {}

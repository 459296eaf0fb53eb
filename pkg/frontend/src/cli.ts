#!/usr/bin/env node
/** plot accuracy|aer|convergence --in <dir|files...> --out <image.svg> */

import { pathToFileURL } from "url";

import { plotAccuracySweep, plotAerSweep, plotConvergence } from "./plots.js";
import { SchemaError, ValidationError } from "./schema.js";

const USAGE = `usage: plot <accuracy|aer|convergence> --in <dir|csv...> --out <image.svg>

  accuracy     final-round accuracy per aggregator vs byzantine percentage
  aer          average error rate (summary rows) vs byzantine percentage
  convergence  per-round accuracy, one line per run

--in accepts a directory (all *.csv inside, sorted) or explicit CSV paths
and may be repeated. The output is a deterministic SVG.`;

interface Args {
  command: string;
  inputs: string[];
  out: string;
}

function parseArgs(argv: string[]): Args {
  const [command, ...rest] = argv;
  if (!command || !["accuracy", "aer", "convergence"].includes(command)) {
    throw new Error(USAGE);
  }
  const inputs: string[] = [];
  let out = "";
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (arg === "--in") {
      while (i + 1 < rest.length && !rest[i + 1].startsWith("--")) {
        inputs.push(rest[++i]);
      }
    } else if (arg === "--out") {
      out = rest[++i] ?? "";
    } else {
      throw new Error(`unknown argument ${arg}\n\n${USAGE}`);
    }
  }
  if (inputs.length === 0 || out === "") {
    throw new Error(USAGE);
  }
  return { command, inputs, out };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error((err as Error).message);
    return 2;
  }
  try {
    if (args.command === "accuracy") {
      plotAccuracySweep(args.inputs, args.out);
    } else if (args.command === "aer") {
      plotAerSweep(args.inputs, args.out);
    } else {
      plotConvergence(args.inputs, args.out);
    }
  } catch (err) {
    if (err instanceof SchemaError || err instanceof ValidationError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  console.log(args.out);
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}

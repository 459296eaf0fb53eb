import { describe, expect, it } from "vitest";

import { parseExperimentCsv } from "../src/parse.js";
import { CSV_COLUMNS, SchemaError, ValidationError } from "../src/schema.js";

const HEADER = CSV_COLUMNS.join(",");

function roundRow(round: number, accuracy: number, aer = ""): string {
  return [round, "fedguard", 0.5, 0.01, accuracy, 2, 1, 3, 0, 1, 0, 0, 0, 0, 0, aer].join(",");
}

describe("parseExperimentCsv", () => {
  it("parses rounds and the summary row, skipping the timestamp comment", () => {
    const text = [
      "# created=2024-01-01T00:00:00",
      HEADER,
      roundRow(1, 0.5),
      roundRow(2, 0.75),
      roundRow(-1, 0.75, "0.5"),
    ].join("\n");
    const table = parseExperimentCsv(text, "run.csv");
    expect(table.rounds.map((r) => r.round)).toEqual([1, 2]);
    expect(table.rounds[1].accuracy).toBe(0.75);
    expect(table.rounds[0].aer).toBeNull();
    expect(table.summary?.aer).toBe(0.5);
    expect(table.summary?.mistaken.backdoor).toBe(1);
  });

  it("names the missing column", () => {
    const header = CSV_COLUMNS.filter((c) => c !== "n_m").join(",");
    expect(() => parseExperimentCsv(`${header}\n1,a,0,0,1,1,1,0,0,0,0,0,0,0,`, "x.csv"))
      .toThrowError(/missing column n_m/);
  });

  it("rejects duplicate rounds", () => {
    const text = [HEADER, roundRow(1, 0.5), roundRow(1, 0.6)].join("\n");
    expect(() => parseExperimentCsv(text, "x.csv")).toThrowError(ValidationError);
  });

  it("rejects empty files and files with only a summary", () => {
    expect(() => parseExperimentCsv("", "x.csv")).toThrowError(SchemaError);
    expect(() => parseExperimentCsv([HEADER, roundRow(-1, 0.5, "0")].join("\n"), "x.csv"))
      .toThrowError(/no per-round rows/);
  });

  it("rejects non-numeric cells", () => {
    const text = [HEADER, roundRow(1, 0.5).replace("0.5,0.01", "0.5,high")].join("\n");
    expect(() => parseExperimentCsv(text, "x.csv")).toThrowError(/alpha/);
  });
});

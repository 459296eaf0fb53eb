/** Criterion 9: regenerate the three figure styles from real simulator
 *  CSVs (the committed fixtures come from the extreme-scenario, 90%-
 *  byzantine, and benign-parity acceptance runs) without error, one line
 *  per aggregator/run, byte-stable across re-runs. Also drives the built
 *  CLI end to end. */

import { execFileSync } from "child_process";
import { existsSync, mkdtempSync, readFileSync, readdirSync } from "fs";
import { tmpdir } from "os";
import { dirname, join } from "path";
import { fileURLToPath } from "url";

import { describe, expect, it } from "vitest";

import { plotAccuracySweep, plotAerSweep, plotConvergence } from "../src/plots.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const SWEEP_DIR = join(HERE, "fixtures", "sweep");
const CONV_DIR = join(HERE, "fixtures", "convergence");

function legendNames(svg: string): string[] {
  return [...svg.matchAll(/<text x="[^"]*" y="[^"]*" font-size="12">([^<]+)<\/text>/g)]
    .map((m) => m[1]);
}

describe("criterion 9: figures from the acceptance-run CSVs", () => {
  it("accuracy sweep: one line per aggregator, byte-stable", () => {
    const out = mkdtempSync(join(tmpdir(), "c9-"));
    const first = plotAccuracySweep([SWEEP_DIR], join(out, "acc1.svg"));
    const second = plotAccuracySweep([SWEEP_DIR], join(out, "acc2.svg"));
    expect(second).toBe(first);
    expect(legendNames(first).sort()).toEqual(["bulyan", "fedavg", "fedguard", "median"]);
    // fedguard appears at two byzantine fractions -> a real polyline
    expect(first).toContain("<polyline");
  });

  it("aer sweep: summary-row AER, byte-stable", () => {
    const out = mkdtempSync(join(tmpdir(), "c9-"));
    const first = plotAerSweep([SWEEP_DIR], join(out, "aer1.svg"));
    const second = plotAerSweep([SWEEP_DIR], join(out, "aer2.svg"));
    expect(second).toBe(first);
    expect(legendNames(first).length).toBe(4);
  });

  it("convergence: one 10-point line per parity run", () => {
    const out = mkdtempSync(join(tmpdir(), "c9-"));
    const files = readdirSync(CONV_DIR).map((f) => join(CONV_DIR, f));
    expect(files.length).toBe(2);
    const svg = plotConvergence(files, join(out, "conv.svg"));
    const lines = svg.match(/<polyline[^>]*"\/>/g) ?? [];
    expect(lines.length).toBe(2);
    for (const line of lines) {
      expect(line.match(/ points="([^"]+)"/)![1].split(" ").length).toBe(10);
    }
    expect(legendNames(svg).sort()).toEqual(["c5_fedavg", "c5_fedguard"]);
  });

  it("convergence over the 90%-byzantine iid runs: one line per aggregator", () => {
    const iid = join(HERE, "fixtures", "iid");
    const out = mkdtempSync(join(tmpdir(), "c9-"));
    const svg = plotConvergence([iid], join(out, "iid.svg"));
    const lines = svg.match(/<polyline[^>]*"\/>/g) ?? [];
    expect(lines.length).toBe(3);
    expect(legendNames(svg).length).toBe(3);
  });

  it("the built CLI drives all three subcommands", () => {
    const cli = join(HERE, "..", "dist", "cli.js");
    expect(existsSync(cli)).toBe(true);
    const out = mkdtempSync(join(tmpdir(), "c9cli-"));
    execFileSync("node", [cli, "accuracy", "--in", SWEEP_DIR, "--out", join(out, "a.svg")]);
    execFileSync("node", [cli, "aer", "--in", SWEEP_DIR, "--out", join(out, "b.svg")]);
    execFileSync("node", [cli, "convergence", "--in", CONV_DIR, "--out", join(out, "c.svg")]);
    for (const name of ["a.svg", "b.svg", "c.svg"]) {
      expect(readFileSync(join(out, name), "utf-8")).toContain("</svg>");
    }
    console.log("[criterion 9] PASS accuracy/AER/convergence figures regenerated, "
      + "one line per aggregator/run, byte-stable");
  });
});

import { execFileSync } from "child_process";
import { mkdtempSync, readFileSync, readdirSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

const ROOT = join(__dirname, "..");
const CLI = join(ROOT, "dist", "plot.js");
const KINDS = ["episodes", "local_capacity", "offered_load", "federation_cost"];
const FIXTURES = KINDS.map((k) => join(__dirname, "fixtures", `${k}.csv`));

function runPlot(outDir: string, inputs: string[], extra: string[] = []): string {
  return execFileSync("node", [CLI, ...inputs, "--out-dir", outDir, ...extra], {
    encoding: "utf8",
  });
}

describe("plot_results CLI", () => {
  it("emits 8 charts (4 profit + 4 gap) from the four sweep CSVs", () => {
    const outDir = mkdtempSync(join(tmpdir(), "figs-"));
    runPlot(outDir, FIXTURES);
    const files = readdirSync(outDir).sort();
    const svgs = files.filter((f) => f.endsWith(".svg"));
    const pngs = files.filter((f) => f.endsWith(".png"));
    expect(svgs).toHaveLength(8);
    expect(pngs).toHaveLength(8);
    for (const kind of KINDS) {
      expect(svgs).toContain(`${kind}_profit.svg`);
      expect(svgs).toContain(`${kind}_gap.svg`);
    }
  });

  it("produces identical bytes across runs", () => {
    const a = mkdtempSync(join(tmpdir(), "figs-a-"));
    const b = mkdtempSync(join(tmpdir(), "figs-b-"));
    runPlot(a, FIXTURES);
    runPlot(b, FIXTURES);
    for (const name of readdirSync(a)) {
      expect(readFileSync(join(a, name)).equals(readFileSync(join(b, name)))).toBe(true);
    }
  });

  it("fails with exit 1 and a header listing on a schema violation", () => {
    const outDir = mkdtempSync(join(tmpdir(), "figs-bad-"));
    const bad = join(outDir, "bad.csv");
    writeFileSync(bad, "experiment,sweep\nfoo,1\n");
    let failed = false;
    try {
      runPlot(outDir, [bad]);
    } catch (err: any) {
      failed = true;
      expect(err.status).toBe(1);
      expect(String(err.stderr)).toContain("avg_profit");
    }
    expect(failed).toBe(true);
  });

  it("fails cleanly on a header-only CSV", () => {
    const outDir = mkdtempSync(join(tmpdir(), "figs-empty-"));
    const empty = join(outDir, "empty.csv");
    writeFileSync(
      empty,
      "experiment,sweep,algorithm,seed,avg_profit,gap,accepted,federated,rejected\n",
    );
    let failed = false;
    try {
      runPlot(outDir, [empty]);
    } catch (err: any) {
      failed = true;
      expect(err.status).toBe(1);
      expect(String(err.stderr)).toContain("no data rows");
    }
    expect(failed).toBe(true);
  });
});

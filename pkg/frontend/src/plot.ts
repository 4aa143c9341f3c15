#!/usr/bin/env node
/**
 * plot_results: render profit and gap charts from fedadm sweep CSVs.
 *
 *   plot_results results/episodes.csv results/federation_cost.csv --out-dir figures/
 *
 * Each input CSV yields <name>_profit.{svg,png} and <name>_gap.{svg,png}.
 */
import { mkdirSync, readFileSync, writeFileSync } from "fs";
import { basename, join } from "path";
import sharp from "sharp";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { renderChart } from "./chart.js";
import { EmptyDataError, SchemaError, parseRows, toSweepData } from "./schema.js";

const X_LABELS: Record<string, string> = {
  episodes: "training episodes",
  local_capacity: "consumer domain capacity",
  offered_load: "offered load scale",
  federation_cost: "federation cost scale",
};

export interface RenderedFigure {
  name: string;
  svg: string;
}

/** Both charts for one sweep CSV, as named SVG strings. */
export function renderCsv(csvText: string, stem: string): RenderedFigure[] {
  const data = toSweepData(parseRows(csvText));
  const xLabel = X_LABELS[data.experiment] ?? data.experiment;
  return [
    {
      name: `${stem}_profit`,
      svg: renderChart(data.profit, {
        title: `Average profit vs ${xLabel}`,
        xLabel,
        yLabel: "average profit per demand",
      }),
    },
    {
      name: `${stem}_gap`,
      svg: renderChart(data.gapPercent, {
        title: `Optimality gap vs ${xLabel}`,
        xLabel,
        yLabel: "optimality gap (%)",
      }),
    },
  ];
}

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .usage("plot_results <csv...> --out-dir figures/")
    .option("out-dir", { type: "string", default: "figures" })
    .option("png", { type: "boolean", default: true, describe: "also write PNGs" })
    .demandCommand(1, "at least one sweep CSV is required")
    .parse();

  const outDir = argv["out-dir"] as string;
  mkdirSync(outDir, { recursive: true });
  for (const input of argv._.map(String)) {
    const stem = basename(input).replace(/\.csv$/, "");
    let figures: RenderedFigure[];
    try {
      figures = renderCsv(readFileSync(input, "utf8"), stem);
    } catch (err) {
      if (err instanceof SchemaError || err instanceof EmptyDataError) {
        console.error(`${input}: ${err.message}`);
        return 1;
      }
      throw err;
    }
    for (const figure of figures) {
      const svgPath = join(outDir, `${figure.name}.svg`);
      writeFileSync(svgPath, figure.svg);
      console.log(`wrote ${svgPath}`);
      if (argv.png) {
        const pngPath = join(outDir, `${figure.name}.png`);
        writeFileSync(pngPath, await sharp(Buffer.from(figure.svg)).png().toBuffer());
        console.log(`wrote ${pngPath}`);
      }
    }
  }
  return 0;
}

const invokedDirectly = process.argv[1]?.endsWith("plot.js");
if (invokedDirectly) {
  main().then(
    (code) => process.exit(code),
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}

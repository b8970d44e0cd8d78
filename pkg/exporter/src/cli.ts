import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { runExport, type ExportJob } from "./export.js";

const USAGE = `usage: feature-export --dataset <id> --out <path> [options]

options:
  --dataset <id>      synthetic[:count:dim:classes:seed] or a .csv path
  --backbone <id>     identity (default) or project:outDim:seed
  --out <path>        output feature file
  --batch-size <n>    records per backbone batch (default 64)
  --max <n>           stop after n records
  --label-kind <k>    class (default) or real
  --label-map <path>  JSON file mapping label names to class ids
`;

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        dataset: { type: "string" },
        backbone: { type: "string" },
        out: { type: "string" },
        "batch-size": { type: "string" },
        max: { type: "string" },
        "label-kind": { type: "string" },
        "label-map": { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  const opts = parsed.values;
  if (opts.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  if (!opts.dataset || !opts.out) {
    console.error("error: --dataset and --out are required");
    process.stderr.write(USAGE);
    return 2;
  }
  if (opts["label-kind"] !== undefined && !["class", "real"].includes(opts["label-kind"])) {
    console.error(`error: --label-kind must be class or real, got '${opts["label-kind"]}'`);
    return 2;
  }

  const job: ExportJob = {
    dataset: opts.dataset,
    out: opts.out,
    backbone: opts.backbone,
    labelKind: opts["label-kind"] as "class" | "real" | undefined,
  };
  try {
    if (opts["batch-size"] !== undefined) {
      job.batchSize = Number(opts["batch-size"]);
    }
    if (opts.max !== undefined) {
      job.maxRecords = Number(opts.max);
    }
    if (opts["label-map"] !== undefined) {
      job.labelMap = JSON.parse(readFileSync(opts["label-map"], "utf-8"));
    }
    const summary = runExport(job);
    console.log(JSON.stringify(summary));
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));

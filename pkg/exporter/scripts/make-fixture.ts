// Regenerates the checked-in conformance fixture: a 64-record
// identity-backbone export plus a JSON sidecar with the exact values the
// file must read back as. The consuming library's tests load both.
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { resolveDataset } from "../src/datasets.js";
import { runExport } from "../src/export.js";

const here = dirname(fileURLToPath(import.meta.url));
const outDir = resolve(here, "../../tests/data");
mkdirSync(outDir, { recursive: true });

const datasetId = "synthetic:64:6:4:11";
const outPath = join(outDir, "exporter_identity_64.kocl");
const summary = runExport({ dataset: datasetId, out: outPath, batchSize: 16 });

// identity backbone: the file must hold the inputs themselves, rounded
// to f32 by the record encoding
const features: number[][] = [];
const labels: number[] = [];
for (const point of resolveDataset(datasetId).points()) {
  features.push(point.values.map(Math.fround));
  labels.push(point.label);
}

const sidecar = {
  dim: summary.dim,
  num_classes: summary.numClasses,
  label_kind: summary.labelKind,
  num_records: summary.records,
  features,
  labels,
};
writeFileSync(join(outDir, "exporter_identity_64.json"), JSON.stringify(sidecar, null, 1) + "\n");
console.log(`wrote ${summary.records} records to ${outPath}`);

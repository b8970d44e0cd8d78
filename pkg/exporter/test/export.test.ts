import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { resolveDataset } from "../src/datasets.js";
import { runExport } from "../src/export.js";
import { HEADER_SIZE, LABEL_CLASS, LABEL_REAL, recordSize } from "../src/featureFile.js";

let dir: string;

beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "export-"));
});

afterEach(() => {
  rmSync(dir, { recursive: true, force: true });
});

// independent byte-level parse, deliberately not using the writer's code
function readFeatureFile(path: string) {
  const buf = readFileSync(path);
  const dim = buf.readUInt32LE(6);
  const numClasses = buf.readUInt32LE(10);
  const numRecords = Number(buf.readBigUInt64LE(14));
  const labelKind = buf.readUInt8(22);
  const rs = recordSize(dim, labelKind as 0 | 1);
  expect(buf.length).toBe(HEADER_SIZE + numRecords * rs);
  const features: number[][] = [];
  const labels: number[] = [];
  for (let i = 0; i < numRecords; i++) {
    const base = HEADER_SIZE + i * rs;
    features.push(Array.from({ length: dim }, (_, j) => buf.readFloatLE(base + 4 * j)));
    labels.push(
      labelKind === LABEL_CLASS
        ? buf.readUInt32LE(base + 4 * dim)
        : buf.readDoubleLE(base + 4 * dim),
    );
  }
  return { dim, numClasses, numRecords, labelKind, features, labels };
}

describe("identity export", () => {
  it("writes the input vectors themselves, in stream order", () => {
    const id = "synthetic:16:5:3:2";
    const out = join(dir, "identity.kocl");
    const summary = runExport({ dataset: id, out, batchSize: 4 });
    expect(summary.records).toBe(16);
    expect(summary.dim).toBe(5);

    const file = readFeatureFile(out);
    expect(file.numRecords).toBe(16);
    expect(file.numClasses).toBe(3);
    const source = [...resolveDataset(id).points()];
    file.features.forEach((row, i) => {
      expect(row).toEqual(source[i].values.map(Math.fround));
    });
    expect(file.labels).toEqual(source.map(p => p.label));
  });

  it("is deterministic: same job, identical bytes", () => {
    const job = { dataset: "synthetic:40:6:4:9", batchSize: 7 };
    const a = join(dir, "a.kocl");
    const b = join(dir, "b.kocl");
    runExport({ ...job, out: a });
    runExport({ ...job, out: b });
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });

  it("honors maxRecords in the header and the body", () => {
    const out = join(dir, "capped.kocl");
    const summary = runExport({ dataset: "synthetic:200:3:4:0", out, maxRecords: 50 });
    expect(summary.records).toBe(50);
    expect(readFeatureFile(out).numRecords).toBe(50);
  });
});

describe("projection backbone", () => {
  it("writes the projected dimensionality and stays deterministic", () => {
    const job = { dataset: "synthetic:20:8:2:1", backbone: "project:4:5" };
    const a = join(dir, "p1.kocl");
    const b = join(dir, "p2.kocl");
    const summary = runExport({ ...job, out: a });
    runExport({ ...job, out: b });
    expect(summary.dim).toBe(4);
    expect(readFeatureFile(a).dim).toBe(4);
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });
});

describe("csv datasets", () => {
  it("maps string labels in first-seen order and skips the header row", () => {
    const csv = join(dir, "pets.csv");
    writeFileSync(csv, "x1,x2,label\n1,2,cat\n3,4,dog\n5,6,cat\n");
    const out = join(dir, "pets.kocl");
    const summary = runExport({ dataset: csv, out });
    expect(summary.numClasses).toBe(2);
    const file = readFeatureFile(out);
    expect(file.labels).toEqual([0, 1, 0]);
    expect(file.features[2]).toEqual([5, 6]);
  });

  it("uses an explicit label map when given", () => {
    const csv = join(dir, "mapped.csv");
    writeFileSync(csv, "1,2,dog\n3,4,cat\n");
    const out = join(dir, "mapped.kocl");
    const summary = runExport({ dataset: csv, out, labelMap: { cat: 0, dog: 1 } });
    expect(summary.numClasses).toBe(2);
    expect(readFeatureFile(out).labels).toEqual([1, 0]);
  });

  it("writes real labels as f64 when asked", () => {
    const csv = join(dir, "reg.csv");
    writeFileSync(csv, "1,0.25\n2,-0.5\n");
    const out = join(dir, "reg.kocl");
    runExport({ dataset: csv, out, labelKind: "real" });
    const file = readFeatureFile(out);
    expect(file.labelKind).toBe(LABEL_REAL);
    expect(file.labels).toEqual([0.25, -0.5]);
  });
});

describe("failure cleanup", () => {
  it("removes the started file when a feature cell fails mid-export", () => {
    const csv = join(dir, "bad.csv");
    writeFileSync(csv, "1,2,cat\n3,oops,dog\n5,6,cat\n");
    const out = join(dir, "bad.kocl");
    expect(() => runExport({ dataset: csv, out, batchSize: 1 })).toThrow(/bad feature value/);
    expect(existsSync(out)).toBe(false);
  });

  it("rejects bad labels before creating the output file", () => {
    const csv = join(dir, "unmapped.csv");
    writeFileSync(csv, "1,2,cat\n3,4,ferret\n");
    const out = join(dir, "unmapped.kocl");
    expect(() => runExport({ dataset: csv, out, labelMap: { cat: 0 } })).toThrow(/ferret/);
    expect(existsSync(out)).toBe(false);
  });

  it("leaves nothing behind for unresolvable datasets", () => {
    const out = join(dir, "never.kocl");
    expect(() => runExport({ dataset: "nope", out })).toThrow(/cannot resolve/);
    expect(existsSync(out)).toBe(false);
  });
});
